from rest_framework import serializers

from Keye_Curation.exceptions import InvalidInputError
from .hashing import HASH_BITS, PHash64, ones_positions


class ImageSourceSerializer(serializers.Serializer):
    """One line of an image list: an id and a path relative to the list."""

    id = serializers.CharField(max_length=65535)
    path = serializers.CharField()


class ImageHashSerializer(serializers.Serializer):
    """Hash record: {"id", "phash", "ones"}."""

    id = serializers.CharField(max_length=65535)
    phash = serializers.CharField(min_length=16, max_length=16)
    ones = serializers.ListField(
        child=serializers.IntegerField(min_value=0, max_value=HASH_BITS - 1),
        required=False
    )

    def validate_phash(self, value):
        try:
            return PHash64.from_hex(value)
        except InvalidInputError as exc:
            raise serializers.ValidationError(exc.message)

    def validate(self, attrs):
        """The ones list, when present, must match the hash bits."""
        expected = ones_positions(attrs['phash'])
        ones = attrs.get('ones')
        if ones is not None and tuple(ones) != expected.positions:
            raise serializers.ValidationError({
                'ones': 'Ones list does not match the set bits of the hash.'
            })
        attrs['ones'] = expected
        return attrs

    def to_representation(self, instance):
        record_id, phash = instance
        return {
            'id': record_id,
            'phash': phash.hex,
            'ones': list(ones_positions(phash).positions),
        }


def hash_record(record_id, phash):
    return ImageHashSerializer((record_id, phash)).data
