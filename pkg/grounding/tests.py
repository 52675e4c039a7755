import io
import os
import random
import tempfile
from unittest import mock

from django.test import SimpleTestCase

from Keye_Curation.exceptions import GroundingSyntaxError, InvalidInputError
from toolkit.cli import run
from toolkit.jsonl import iter_jsonl, write_jsonl
from .annotations import SPECIAL_TOKENS, GroundingAnnotation, NormCoord, PixelGeometry, Ref, is_clockwise, normalize
from .grammar import parse, serialize, validate_label

REF_ALPHABET = 'abc xyz-_.,[]<>|é猫0123'


def random_ref(rng):
    if rng.random() < 0.4:
        return None
    text = ''.join(rng.choice(REF_ALPHABET) for _ in range(rng.randint(1, 12)))
    return Ref(rng.choice(('object', 'ocr')), text)


def random_coord(rng):
    return NormCoord(rng.randrange(1000), rng.randrange(1000))


def random_ring(rng):
    while True:
        ring = [random_coord(rng) for _ in range(rng.randint(3, 6))]
        area = sum(a.x * b.y - b.x * a.y for a, b in zip(ring, ring[1:] + ring[:1]))
        if area > 0:
            return ring
        if area < 0:
            return ring[::-1]


def random_annotation(rng):
    kind = rng.choice(('points', 'boxes', 'polygons'))
    count = rng.randint(1, 4)
    if kind == 'points':
        payload = [random_coord(rng) for _ in range(count)]
    elif kind == 'boxes':
        payload = []
        for _ in range(count):
            a, b = random_coord(rng), random_coord(rng)
            payload.append((NormCoord(min(a.x, b.x), min(a.y, b.y)), NormCoord(max(a.x, b.x), max(a.y, b.y))))
    else:
        payload = [random_ring(rng) for _ in range(count)]
    return GroundingAnnotation(kind, payload, random_ref(rng))


class SerializeTest(SimpleTestCase):
    """Test cases for label rendering."""

    def test_point_with_object_ref(self):
        """Test the object reference and point format"""
        ann = GroundingAnnotation('points', [NormCoord(500, 500)], Ref('object', 'cat'))
        self.assertEqual(
            serialize(ann),
            '<|object_ref_start|>cat<|object_ref_end|><|point_start|>[[500, 500]]<|point_end|>'
        )

    def test_box_without_ref(self):
        """Test the bounding box format"""
        ann = GroundingAnnotation('boxes', [(NormCoord(10, 20), NormCoord(30, 40))])
        self.assertEqual(serialize(ann), '<|box_start|>[[10, 20, 30, 40]]<|box_end|>')

    def test_polygon_with_ocr_ref(self):
        """Test the polygon format"""
        ann = GroundingAnnotation(
            'polygons', [[NormCoord(0, 0), NormCoord(10, 0), NormCoord(10, 10)]], Ref('ocr', 'STOP')
        )
        self.assertEqual(
            serialize(ann),
            '<|ocr_text_start|>STOP<|ocr_text_end|><|polygon_start|>[[[0, 0], [10, 0], [10, 10]]]<|polygon_end|>'
        )

    def test_round_trip(self):
        """Test parse(serialize(a)) == a for random annotations"""
        rng = random.Random(20)
        for _ in range(500):
            ann = random_annotation(rng)
            self.assertEqual(parse(serialize(ann)), [ann])

    def test_concatenated_labels_with_free_text(self):
        """Test that free text between annotation groups is ignored"""
        rng = random.Random(21)
        anns = [random_annotation(rng) for _ in range(5)]
        label = 'Here: ' + ' and '.join(serialize(a) for a in anns) + '.'
        self.assertEqual(parse(label), anns)


class ParseTest(SimpleTestCase):
    """Test cases for label parsing and diagnostics."""

    def assertParseError(self, label, code):
        with self.assertRaises(GroundingSyntaxError) as ctx:
            parse(label)
        self.assertEqual(ctx.exception.code, code)
        return ctx.exception

    def test_multiple_points(self):
        """Test a points block with two points"""
        [ann] = parse('<|point_start|>[[1, 2], [3, 4]]<|point_end|>')
        self.assertEqual(ann.kind, 'points')
        self.assertEqual(ann.payload, (NormCoord(1, 2), NormCoord(3, 4)))
        self.assertIsNone(ann.ref)

    def test_empty_label(self):
        """Test that an empty label has no annotations"""
        self.assertEqual(parse(''), [])
        self.assertEqual(parse(b''), [])

    def test_whitespace_tolerated(self):
        """Test flexible spacing inside coordinate lists"""
        [ann] = parse('<|box_start|>[ [1,2 ,3,\n4] ]<|box_end|>')
        self.assertEqual(ann.coords(), [[1, 2, 3, 4]])

    def test_box_order(self):
        """Test that reversed corners are rejected"""
        self.assertParseError('<|box_start|>[[30, 40, 10, 20]]<|box_end|>', 'box_order')

    def test_byte_offset_counts_utf8(self):
        """Test that offsets are byte positions of the offending item"""
        error = self.assertParseError('é<|box_start|>[[30, 40, 10, 20]]<|box_end|>', 'box_order')
        self.assertEqual(error.offset, 16)

    def test_counter_clockwise_polygon(self):
        """Test polygon orientation"""
        self.assertParseError(
            '<|polygon_start|>[[[0, 0], [10, 10], [10, 0]]]<|polygon_end|>', 'counter_clockwise'
        )

    def test_degenerate_polygon(self):
        """Test zero-area and short rings"""
        self.assertParseError('<|polygon_start|>[[[0, 0], [5, 0], [10, 0]]]<|polygon_end|>', 'degenerate_polygon')
        self.assertParseError('<|polygon_start|>[[[0, 0], [5, 0]]]<|polygon_end|>', 'degenerate_polygon')

    def test_coordinate_errors(self):
        """Test non-integer and out-of-range coordinates"""
        self.assertParseError('<|point_start|>[[1.5, 2]]<|point_end|>', 'non_integer')
        self.assertParseError('<|point_start|>[[1000, 2]]<|point_end|>', 'out_of_range')
        self.assertParseError('<|point_start|>[[-1, 2]]<|point_end|>', 'out_of_range')
        self.assertParseError('<|point_start|>[[1, 2, 3]]<|point_end|>', 'bad_arity')

    def test_structure_errors(self):
        """Test unbalanced and misnested tokens"""
        self.assertParseError('<|point_start|>[[1, 2]]', 'unbalanced_token')
        self.assertParseError('[[1, 2]]<|point_end|>', 'unbalanced_token')
        self.assertParseError('<|point_start|>[[1, 2]]<|box_end|>', 'malformed_nesting')
        self.assertParseError('<|object_ref_start|>cat<|object_ref_end|> <|point_start|>[[1, 2]]<|point_end|>',
                              'malformed_nesting')
        self.assertParseError('<|point_start|>[[[1, 2]]]<|point_end|>', 'malformed_nesting')
        self.assertParseError('<|point_start|>[[1, 2]<|point_end|>', 'unbalanced_token')

    def test_empty_payloads(self):
        """Test empty geometry blocks and empty refs"""
        self.assertParseError('<|point_start|><|point_end|>', 'empty_payload')
        self.assertParseError('<|point_start|>[]<|point_end|>', 'empty_payload')
        self.assertParseError('<|object_ref_start|><|object_ref_end|><|point_start|>[[1, 2]]<|point_end|>',
                              'empty_ref')

    def test_unexpected_character(self):
        """Test junk inside a coordinate block"""
        self.assertParseError('<|point_start|>[[1, x]]<|point_end|>', 'unexpected_character')

    def test_invalid_utf8(self):
        """Test that undecodable bytes are a diagnostic"""
        error = self.assertParseError(b'ok\xff', 'invalid_utf8')
        self.assertEqual(error.offset, 2)

    def test_validate_label(self):
        """Test diagnostics listing"""
        self.assertEqual(validate_label('<|point_start|>[[1, 2]]<|point_end|>'), [])
        [diagnostic] = validate_label('<|point_start|>[[1, 2]]')
        self.assertEqual(diagnostic.code, 'unbalanced_token')

    def test_fuzzed_labels_fail_cleanly(self):
        """Test that mutated labels either parse or raise a diagnostic"""
        rng = random.Random(22)
        pieces = list(SPECIAL_TOKENS) + ['[', ']', ',', ' ', '1', '999', '-', '.', 'é']
        for _ in range(2000):
            label = serialize(random_annotation(rng))
            chars = list(label)
            for _ in range(rng.randint(1, 4)):
                position = rng.randrange(len(chars) + 1)
                if rng.random() < 0.5 and chars:
                    del chars[min(position, len(chars) - 1)]
                else:
                    chars.insert(position, rng.choice(pieces))
            try:
                result = parse(''.join(chars))
            except GroundingSyntaxError as exc:
                self.assertGreaterEqual(exc.offset, 0)
            else:
                self.assertIsInstance(result, list)


class GeometryTest(SimpleTestCase):
    """Test cases for orientation and normalization."""

    def test_is_clockwise(self):
        """Test shoelace orientation in y-down coordinates"""
        ring = [NormCoord(0, 0), NormCoord(10, 0), NormCoord(10, 10)]
        self.assertTrue(is_clockwise(ring))
        self.assertFalse(is_clockwise(ring[::-1]))
        self.assertFalse(is_clockwise([NormCoord(0, 0), NormCoord(5, 0), NormCoord(10, 0)]))
        with self.assertRaises(InvalidInputError):
            is_clockwise(ring[:2])

    def test_normalize_examples(self):
        """Test floor scaling and the upper clamp"""
        ann = normalize(PixelGeometry('points', ((0, 0), (999.9, 500), (1000, 1000)), 1000, 1000))
        self.assertEqual(ann.coords(), [[0, 0], [999, 500], [999, 999]])

    def test_normalize_box_keeps_ref(self):
        """Test normalizing a box in a non-square image"""
        geom = PixelGeometry('boxes', ((64, 48, 320, 240),), 640, 480, Ref('object', 'dog'))
        ann = normalize(geom)
        self.assertEqual(ann.coords(), [[100, 100, 500, 500]])
        self.assertEqual(ann.ref, Ref('object', 'dog'))

    def test_normalize_out_of_image(self):
        """Test that coordinates outside the image are rejected"""
        with self.assertRaises(InvalidInputError):
            normalize(PixelGeometry('points', ((641, 0),), 640, 480))

    def test_reserved_token_in_ref(self):
        """Test that ref text cannot contain special tokens"""
        with self.assertRaises(InvalidInputError):
            GroundingAnnotation('points', [NormCoord(1, 1)], Ref('object', 'a<|box_end|>b'))


class GroundingCommandTest(SimpleTestCase):
    """Test cases for the grounding command."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_validate_reports_line(self):
        """Test one counter-clockwise polygon gives exit 1 and a located diagnostic"""
        write_jsonl(self.path('labels.jsonl'), [
            {'sample_id': 'ok', 'label': '<|point_start|>[[1, 2]]<|point_end|>'},
            {'sample_id': 'bad', 'label': '<|polygon_start|>[[[0, 0], [10, 10], [10, 0]]]<|polygon_end|>'},
        ])
        with mock.patch('sys.stderr', new_callable=io.StringIO) as stderr:
            code = run(['grounding', 'validate', '--input', self.path('labels.jsonl')])
        self.assertEqual(code, 1)
        diagnostics = [line for line in stderr.getvalue().splitlines() if 'counter_clockwise' in line]
        self.assertEqual(len(diagnostics), 1)
        self.assertIn(':2 [bad]', diagnostics[0])

    def test_normalize_then_emit(self):
        """Test the pixel to label pipeline"""
        write_jsonl(self.path('pixels.jsonl'), [{
            'sample_id': 's1', 'ref': {'kind': 'object', 'text': 'cat'},
            'kind': 'boxes', 'coords': [[10, 20, 30, 40]], 'width': 1000, 'height': 1000,
        }])
        self.assertEqual(run([
            'grounding', 'normalize', '--input', self.path('pixels.jsonl'), '--output', self.path('norm.jsonl'),
        ]), 0)
        self.assertEqual(run([
            'grounding', 'emit', '--input', self.path('norm.jsonl'), '--output', self.path('labels.jsonl'),
        ]), 0)
        [(_, record)] = list(iter_jsonl(self.path('labels.jsonl')))
        self.assertEqual(
            record['label'],
            '<|object_ref_start|>cat<|object_ref_end|><|box_start|>[[10, 20, 30, 40]]<|box_end|>'
        )
