"""
Grounding annotation types, geometry checks and pixel normalization.

Coordinates are integers in [0, 1000). Boxes are (top-left, bottom-right)
pairs; polygon rings run clockwise in y-down image coordinates.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from Keye_Curation.exceptions import InvalidInputError

COORD_LIMIT = 1000
KINDS = ('points', 'boxes', 'polygons')
REF_KINDS = ('object', 'ocr')

SPECIAL_TOKENS = (
    '<|object_ref_start|>', '<|object_ref_end|>',
    '<|ocr_text_start|>', '<|ocr_text_end|>',
    '<|point_start|>', '<|point_end|>',
    '<|box_start|>', '<|box_end|>',
    '<|polygon_start|>', '<|polygon_end|>',
)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class NormCoord:
    x: int
    y: int

    def __post_init__(self):
        for value in (self.x, self.y):
            if not _is_int(value):
                raise InvalidInputError(f"Coordinate {value!r} is not an integer.")
            if not 0 <= value < COORD_LIMIT:
                raise InvalidInputError(f"Coordinate {value} is outside [0, {COORD_LIMIT}).")


@dataclass(frozen=True)
class Ref:
    kind: str
    text: str

    def __post_init__(self):
        if self.kind not in REF_KINDS:
            raise InvalidInputError(f"Unknown ref kind {self.kind!r}.")


def shoelace(ring):
    """Sum of x_i*y_{i+1} - x_{i+1}*y_i over the closed ring."""
    total = 0
    for i, a in enumerate(ring):
        b = ring[(i + 1) % len(ring)]
        total += a[0] * b[1] - b[0] * a[1]
    return total


def _xy(coord):
    return (coord.x, coord.y) if isinstance(coord, NormCoord) else (coord[0], coord[1])


def is_clockwise(ring):
    """True iff the ring has positive shoelace sum, i.e. runs clockwise with y pointing down."""
    if len(ring) < 3:
        raise InvalidInputError(f"A ring needs at least 3 vertices, got {len(ring)}.")
    return shoelace([_xy(c) for c in ring]) > 0


def annotation_problem(kind, payload, ref):
    """
    First invariant violation of an annotation as (code, message, item index), or None.

    The item index locates the offending point, box or ring inside the payload.
    """
    if kind not in KINDS:
        return 'malformed_nesting', f"Unknown annotation kind {kind!r}.", None
    if not payload:
        return 'empty_payload', "Annotation payload is empty.", None
    if ref is not None:
        if not ref.text:
            return 'empty_ref', "Reference text is empty.", None
        for token in SPECIAL_TOKENS:
            if token in ref.text:
                return 'reserved_token', f"Reference text contains reserved token {token}.", None
    if kind == 'boxes':
        for i, (top_left, bottom_right) in enumerate(payload):
            if top_left.x > bottom_right.x or top_left.y > bottom_right.y:
                return 'box_order', "Box corners must satisfy x1 <= x2 and y1 <= y2.", i
    if kind == 'polygons':
        for i, ring in enumerate(payload):
            if len(ring) < 3:
                return 'degenerate_polygon', f"Polygon ring has {len(ring)} vertices, needs 3.", i
            area = shoelace([_xy(c) for c in ring])
            if area == 0:
                return 'degenerate_polygon', "Polygon ring has zero area.", i
            if area < 0:
                return 'counter_clockwise', "Polygon ring is counter-clockwise.", i
    return None


@dataclass(frozen=True)
class GroundingAnnotation:
    """
    Points, boxes or polygons with an optional object/OCR reference.

    payload: points -> tuple of NormCoord; boxes -> tuple of (NormCoord, NormCoord);
    polygons -> tuple of rings, each a tuple of NormCoord.
    """

    kind: str
    payload: tuple
    ref: Ref = None

    def __post_init__(self):
        if self.kind == 'points':
            payload = tuple(self.payload)
        elif self.kind == 'boxes':
            payload = tuple((box[0], box[1]) for box in self.payload)
        else:
            payload = tuple(tuple(ring) for ring in self.payload)
        object.__setattr__(self, 'payload', payload)
        problem = annotation_problem(self.kind, payload, self.ref)
        if problem is not None:
            raise InvalidInputError(problem[1])

    def coords(self):
        """Coordinates in the label's JSON array layout."""
        if self.kind == 'points':
            return [[c.x, c.y] for c in self.payload]
        if self.kind == 'boxes':
            return [[a.x, a.y, b.x, b.y] for a, b in self.payload]
        return [[[c.x, c.y] for c in ring] for ring in self.payload]

    @classmethod
    def from_coords(cls, kind, coords, ref=None):
        """Build from the JSON array layout used by labels and JSONL records."""
        try:
            if kind == 'points':
                payload = [NormCoord(x, y) for x, y in coords]
            elif kind == 'boxes':
                payload = [(NormCoord(x1, y1), NormCoord(x2, y2)) for x1, y1, x2, y2 in coords]
            elif kind == 'polygons':
                payload = [[NormCoord(x, y) for x, y in ring] for ring in coords]
            else:
                raise InvalidInputError(f"Unknown annotation kind {kind!r}.")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"Coordinates do not match the {kind} layout: {exc}")
        return cls(kind, tuple(payload), ref)


@dataclass(frozen=True)
class PixelGeometry:
    """Real-valued pixel coordinates, in the same layout as GroundingAnnotation.coords()."""

    kind: str
    coords: tuple
    width: float
    height: float
    ref: Ref = None

    def __post_init__(self):
        if not (self.width >= 1 and self.height >= 1):
            raise InvalidInputError(f"Image size {self.width}x{self.height} must be at least 1x1.")
        if self.kind not in KINDS:
            raise InvalidInputError(f"Unknown annotation kind {self.kind!r}.")


def _normalize_value(value, extent, axis):
    if not math.isfinite(value) or not 0 <= value <= extent:
        raise InvalidInputError(f"{axis} coordinate {value} is outside the image extent [0, {extent}].")
    scaled = Fraction(value) * COORD_LIMIT / Fraction(extent)
    return min(math.floor(scaled), COORD_LIMIT - 1)


def normalize(geom):
    """Map pixel coordinates to integers in [0, 1000) with floor(v / extent * 1000), clamped to 999."""
    def point(x, y):
        return [_normalize_value(x, geom.width, 'x'), _normalize_value(y, geom.height, 'y')]

    try:
        if geom.kind == 'points':
            coords = [point(x, y) for x, y in geom.coords]
        elif geom.kind == 'boxes':
            coords = [point(x1, y1) + point(x2, y2) for x1, y1, x2, y2 in geom.coords]
        else:
            coords = [[point(x, y) for x, y in ring] for ring in geom.coords]
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"Coordinates do not match the {geom.kind} layout: {exc}")
    return GroundingAnnotation.from_coords(geom.kind, coords, geom.ref)
