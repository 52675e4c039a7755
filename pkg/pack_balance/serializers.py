from rest_framework import serializers

from decontam.serializers import FiniteFloatField
from .cursor import I64_MAX, I64_MIN, U64_MAX
from .scheduling import WorkItem


class WorkItemSerializer(serializers.Serializer):
    """A sequence to place; cost defaults to an estimate from its token count."""

    id = serializers.CharField()
    tokens = serializers.IntegerField(min_value=1)
    cost = FiniteFloatField(required=False, allow_null=True, default=None, min_value=0)

    def to_work_item(self, cost=None):
        data = self.validated_data
        value = data['cost'] if data['cost'] is not None else cost
        return WorkItem(data['id'], data['tokens'], value)


class PackPlanSerializer(serializers.Serializer):
    capacity = serializers.IntegerField()
    bins = serializers.SerializerMethodField()

    def get_bins(self, plan):
        return [{'items': items, 'tokens': fill} for items, fill in plan.bins]


class GroupAssignmentSerializer(serializers.Serializer):
    groups = serializers.IntegerField()
    makespan = serializers.FloatField()
    loads = serializers.ListField(child=serializers.FloatField())
    assignment = serializers.SerializerMethodField()

    def get_assignment(self, result):
        return [{'id': item_id, 'group': group} for item_id, group in sorted(result.assignment.items())]


class ResumeCursorSerializer(serializers.Serializer):
    epoch = serializers.IntegerField(min_value=0, max_value=U64_MAX)
    shard_index = serializers.IntegerField(min_value=0, max_value=U64_MAX)
    sample_offset = serializers.IntegerField(min_value=0, max_value=U64_MAX)
    shuffle_seed = serializers.IntegerField(min_value=I64_MIN, max_value=I64_MAX)
    checksum = serializers.IntegerField(read_only=True)
