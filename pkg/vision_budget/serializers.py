from rest_framework import serializers


class ImagePlanSerializer(serializers.Serializer):
    """{"out_w", "out_h", "grid": [h, w], "tokens"}"""

    out_w = serializers.IntegerField(source='out_width')
    out_h = serializers.IntegerField(source='out_height')
    grid = serializers.SerializerMethodField()
    tokens = serializers.IntegerField()

    def get_grid(self, obj):
        return [obj.grid_h, obj.grid_w]


class VideoPlanSerializer(serializers.Serializer):
    """Image plan fields for one frame plus the frame schedule; "tokens" is the total."""

    out_w = serializers.IntegerField(source='out_width')
    out_h = serializers.IntegerField(source='out_height')
    grid = serializers.SerializerMethodField()
    tokens = serializers.IntegerField()
    per_frame_tokens = serializers.IntegerField()
    frames = serializers.IntegerField()
    stride = serializers.IntegerField()
    effective_fps = serializers.FloatField()
    timestamps = serializers.ListField(child=serializers.FloatField())
    time_indices = serializers.ListField(child=serializers.IntegerField())

    def get_grid(self, obj):
        return list(obj.frame_grid)
