import math

from rest_framework import serializers

from .records import DEFAULT_SOURCE, SPLITS


class SampleManifestEntrySerializer(serializers.Serializer):
    """One manifest line: a sample and the images it shows."""

    sample_id = serializers.CharField()
    image_ids = serializers.ListField(child=serializers.CharField(), min_length=1)
    split = serializers.ChoiceField(choices=SPLITS)
    benchmark_name = serializers.CharField(required=False, allow_null=True, default=None)
    source = serializers.CharField(required=False, default=DEFAULT_SOURCE)

    def validate(self, attrs):
        """benchmark_name is required for benchmark samples and forbidden otherwise."""
        if attrs['split'] == 'benchmark' and not attrs.get('benchmark_name'):
            raise serializers.ValidationError({
                'benchmark_name': 'Benchmark samples must name their benchmark.'
            })
        if attrs['split'] == 'train' and attrs.get('benchmark_name') is not None:
            raise serializers.ValidationError({
                'benchmark_name': 'Train samples cannot name a benchmark.'
            })
        return attrs


class FiniteFloatField(serializers.FloatField):
    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if not math.isfinite(value):
            raise serializers.ValidationError('Value must be finite.')
        return value


class EmbeddingRecordSerializer(serializers.Serializer):
    id = serializers.CharField()
    image_vec = serializers.ListField(child=FiniteFloatField(), min_length=1)
    text_vec = serializers.ListField(child=FiniteFloatField(), min_length=1)


class PairScoreSerializer(serializers.Serializer):
    """Precomputed image-caption score; NaN is rejected."""

    id = serializers.CharField()
    score = FiniteFloatField()


class FlaggedSampleSerializer(serializers.Serializer):
    sample_id = serializers.CharField()
    benchmarks = serializers.ListField(child=serializers.CharField())
    images = serializers.ListField(child=serializers.CharField())
