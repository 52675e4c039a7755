import math

from rest_framework import serializers

from Keye_Curation.exceptions import InvalidInputError
from .annotations import KINDS, REF_KINDS, GroundingAnnotation, PixelGeometry, Ref
from .grammar import serialize


class RefSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=REF_KINDS)
    text = serializers.CharField(trim_whitespace=False)


class GroundingRecordSerializer(serializers.Serializer):
    """Annotation record: {"sample_id", "ref", "kind", "coords"} plus "label" on output."""

    sample_id = serializers.CharField()
    ref = RefSerializer(allow_null=True, required=False, default=None)
    kind = serializers.ChoiceField(choices=KINDS)
    coords = serializers.JSONField()
    label = serializers.CharField(required=False, trim_whitespace=False)

    def validate(self, attrs):
        """Coordinates must form a valid normalized annotation."""
        ref = Ref(**attrs['ref']) if attrs.get('ref') else None
        try:
            attrs['annotation'] = GroundingAnnotation.from_coords(attrs['kind'], attrs['coords'], ref)
        except InvalidInputError as exc:
            raise serializers.ValidationError({'coords': exc.message})
        return attrs


class LabelRecordSerializer(serializers.Serializer):
    sample_id = serializers.CharField()
    label = serializers.CharField(allow_blank=True, trim_whitespace=False)


class PixelGeometrySerializer(serializers.Serializer):
    """Pixel-space annotation record with the image size."""

    sample_id = serializers.CharField()
    ref = RefSerializer(allow_null=True, required=False, default=None)
    kind = serializers.ChoiceField(choices=KINDS)
    coords = serializers.JSONField()
    width = serializers.FloatField(min_value=1)
    height = serializers.FloatField(min_value=1)

    def validate(self, attrs):
        for name in ('width', 'height'):
            if not math.isfinite(attrs[name]):
                raise serializers.ValidationError({name: 'Image size must be finite.'})
        ref = Ref(**attrs['ref']) if attrs.get('ref') else None
        attrs['geometry'] = PixelGeometry(
            attrs['kind'], attrs['coords'], attrs['width'], attrs['height'], ref
        )
        return attrs


def annotation_record(sample_id, annotation):
    ref = annotation.ref
    return {
        'sample_id': sample_id,
        'ref': {'kind': ref.kind, 'text': ref.text} if ref is not None else None,
        'kind': annotation.kind,
        'coords': annotation.coords(),
        'label': serialize(annotation),
    }
