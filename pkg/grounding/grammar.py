"""
Serializer and parser for grounding labels.

    <|object_ref_start|>cat<|object_ref_end|><|box_start|>[[10, 20, 30, 40]]<|box_end|>

A reference wrapper (object or OCR) must be immediately followed by a geometry
block. Free text between annotation groups is ignored; special tokens outside
that structure are errors. Parse failures raise GroundingSyntaxError with a
diagnostic code and a byte offset into the UTF-8 input.
"""

import re

from Keye_Curation.exceptions import GroundingSyntaxError
from .annotations import COORD_LIMIT, GroundingAnnotation, NormCoord, Ref, annotation_problem

GEOMETRY_TOKENS = {
    'points': ('<|point_start|>', '<|point_end|>'),
    'boxes': ('<|box_start|>', '<|box_end|>'),
    'polygons': ('<|polygon_start|>', '<|polygon_end|>'),
}
REF_TOKENS = {
    'object': ('<|object_ref_start|>', '<|object_ref_end|>'),
    'ocr': ('<|ocr_text_start|>', '<|ocr_text_end|>'),
}

_TOKEN_RE = re.compile(
    r'<\|(object_ref_start|object_ref_end|ocr_text_start|ocr_text_end'
    r'|point_start|point_end|box_start|box_end|polygon_start|polygon_end)\|>'
)
_NAME_TO_KIND = {
    'point': 'points', 'box': 'boxes', 'polygon': 'polygons',
    'object_ref': 'object', 'ocr_text': 'ocr',
}
_LEXEME_RE = re.compile(
    r'(?P<space>\s+)|(?P<open>\[)|(?P<close>\])|(?P<comma>,)'
    r'|(?P<number>-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)'
)
# points and boxes nest two levels, polygons three
_DEPTH = {'points': 2, 'boxes': 2, 'polygons': 3}
_ARITY = {'points': 2, 'boxes': 4}


def serialize(ann):
    """Render an annotation exactly as the label grammar prints it."""
    prefix = ''
    if ann.ref is not None:
        start, end = REF_TOKENS[ann.ref.kind]
        prefix = f"{start}{ann.ref.text}{end}"
    start, end = GEOMETRY_TOKENS[ann.kind]
    return f"{prefix}{start}{_render(ann.coords())}{end}"


def _render(value):
    if isinstance(value, list):
        return '[' + ', '.join(_render(v) for v in value) + ']'
    return str(value)


class _Number:
    __slots__ = ('text', 'offset')

    def __init__(self, text, offset):
        self.text = text
        self.offset = offset


class _List(list):
    __slots__ = ('offset',)


class _Parser:
    """Recursive descent over one label; offsets are character indices until reported."""

    def __init__(self, text):
        self.text = text

    def fail(self, code, char_offset, message):
        byte_offset = len(self.text[:char_offset].encode('utf-8', 'surrogatepass'))
        raise GroundingSyntaxError(code, byte_offset, message)

    def parse(self):
        tokens = [
            (match.group(1).rsplit('_', 1), match.start(), match.end())
            for match in _TOKEN_RE.finditer(self.text)
        ]
        annotations = []
        i = 0
        while i < len(tokens):
            (name, edge), start, end = tokens[i]
            kind = _NAME_TO_KIND[name]
            if edge == 'end':
                self.fail('unbalanced_token', start, f"Closing token for {name} without an opening token.")

            ref = None
            if kind in REF_TOKENS:
                closing = self._closing(tokens, i, name)
                ref_end = tokens[i + 1][2]
                ref = Ref(kind, self.text[end:closing])
                if not ref.text:
                    self.fail('empty_ref', end, "Reference text is empty.")
                i += 2
                if i >= len(tokens) or tokens[i][1] != ref_end or tokens[i][0][1] != 'start' \
                        or _NAME_TO_KIND[tokens[i][0][0]] not in GEOMETRY_TOKENS:
                    self.fail('malformed_nesting', ref_end,
                              "A reference must be immediately followed by a geometry block.")
                (name, _), start, end = tokens[i]
                kind = _NAME_TO_KIND[name]

            closing = self._closing(tokens, i, name)
            annotations.append(self._geometry(kind, ref, end, closing, start))
            i += 2
        return annotations

    def _closing(self, tokens, i, name):
        """Start index of the matching closing token, which must be the next token."""
        start = tokens[i][1]
        if i + 1 >= len(tokens):
            self.fail('unbalanced_token', start, f"Token for {name} is never closed.")
        (next_name, edge), next_start, _ = tokens[i + 1]
        if next_name != name or edge != 'end':
            self.fail('malformed_nesting', next_start, f"Unexpected token inside {name} block.")
        return next_start

    def _geometry(self, kind, ref, body_start, body_end, block_start):
        value, pos = self._value(body_start, body_end, depth=1, max_depth=_DEPTH[kind])
        if value is None:
            self.fail('empty_payload', body_start, f"Empty {kind} block.")
        pos = self._skip_space(pos, body_end)
        if pos != body_end:
            self.fail('unexpected_character', pos, "Unexpected content after the coordinate list.")
        if not isinstance(value, _List):
            self.fail('malformed_nesting', value.offset, "Coordinates must be a list.")
        if not value:
            self.fail('empty_payload', value.offset, f"Empty {kind} list.")

        payload = []
        for item in value:
            if kind == 'polygons':
                ring = self._expect_list(item, "Polygon must be a list of vertices.")
                payload.append(tuple(self._coord(self._expect_tuple(v, 2)) for v in ring))
            else:
                numbers = self._expect_tuple(item, _ARITY[kind])
                if kind == 'points':
                    payload.append(self._coord(numbers))
                else:
                    payload.append((self._coord(numbers[:2]), self._coord(numbers[2:])))

        problem = annotation_problem(kind, payload, ref)
        if problem is not None:
            code, message, item = problem
            offset = value[item].offset if item is not None else block_start
            self.fail(code, offset, message)
        return GroundingAnnotation(kind, tuple(payload), ref)

    def _expect_list(self, node, message):
        if not isinstance(node, _List):
            self.fail('malformed_nesting', node.offset, message)
        return node

    def _expect_tuple(self, node, arity):
        self._expect_list(node, f"Expected a list of {arity} integers.")
        if len(node) != arity or not all(isinstance(n, _Number) for n in node):
            self.fail('bad_arity', node.offset, f"Expected exactly {arity} integers.")
        return node

    def _coord(self, numbers):
        return NormCoord(*(self._integer(n) for n in numbers))

    def _integer(self, number):
        text = number.text
        if not re.fullmatch(r'-?\d+', text):
            self.fail('non_integer', number.offset, f"Coordinate {text} is not an integer.")
        digits = text.lstrip('-').lstrip('0') or '0'
        if text.startswith('-') and digits != '0' or len(digits) > len(str(COORD_LIMIT)):
            self.fail('out_of_range', number.offset, f"Coordinate {text} is outside [0, {COORD_LIMIT}).")
        value = int(digits)
        if value >= COORD_LIMIT:
            self.fail('out_of_range', number.offset, f"Coordinate {text} is outside [0, {COORD_LIMIT}).")
        return value

    def _skip_space(self, pos, stop):
        while pos < stop and self.text[pos].isspace():
            pos += 1
        return pos

    def _lexeme(self, pos, stop):
        match = _LEXEME_RE.match(self.text, pos, stop)
        if match is None:
            self.fail('unexpected_character', pos, f"Unexpected character {self.text[pos]!r}.")
        return match

    def _value(self, pos, stop, depth, max_depth):
        """Parse one number or list; returns (node or None at end of input, next position)."""
        pos = self._skip_space(pos, stop)
        if pos >= stop:
            return None, pos
        match = self._lexeme(pos, stop)
        if match.lastgroup == 'number':
            return _Number(match.group(), pos), match.end()
        if match.lastgroup != 'open':
            self.fail('unexpected_character', pos, f"Expected a value, found {match.group()!r}.")
        if depth > max_depth:
            self.fail('malformed_nesting', pos, f"Lists nest deeper than {max_depth} levels.")

        node = _List()
        node.offset = pos
        pos = self._skip_space(match.end(), stop)
        if pos < stop and self.text[pos] == ']':
            return node, pos + 1
        while True:
            child, pos = self._value(pos, stop, depth + 1, max_depth)
            if child is None:
                self.fail('unbalanced_token', node.offset, "Unterminated list.")
            node.append(child)
            pos = self._skip_space(pos, stop)
            if pos >= stop:
                self.fail('unbalanced_token', node.offset, "Unterminated list.")
            match = self._lexeme(pos, stop)
            if match.lastgroup == 'close':
                return node, match.end()
            if match.lastgroup != 'comma':
                self.fail('unexpected_character', pos, f"Expected ',' or ']', found {match.group()!r}.")
            pos = match.end()


def parse(label):
    """Parse every annotation in a label string (or UTF-8 bytes)."""
    if isinstance(label, (bytes, bytearray)):
        try:
            label = bytes(label).decode('utf-8')
        except UnicodeDecodeError as exc:
            raise GroundingSyntaxError('invalid_utf8', exc.start, "Input is not valid UTF-8.")
    return _Parser(label).parse()


def validate_label(label):
    """Diagnostics for a label: an empty list when it parses."""
    try:
        parse(label)
    except GroundingSyntaxError as exc:
        return [exc]
    return []
