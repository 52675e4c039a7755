from Keye_Curation.exceptions import DataIntegrityError
from toolkit.jsonl import format_errors, iter_jsonl
from .serializers import WorkItemSerializer


def load_work_items(path, on_error, cost=None):
    """
    Read WorkItems from JSONL. `cost` maps a token count to a cost for records
    without one.
    """
    items, seen = [], set()
    for line_number, record in iter_jsonl(path, on_error):
        serializer = WorkItemSerializer(data=record)
        if not serializer.is_valid():
            on_error(DataIntegrityError(
                format_errors(serializer.errors), path=path, line=line_number, record_id=record.get('id'),
            ))
            continue
        tokens = serializer.validated_data['tokens']
        item = serializer.to_work_item(cost(tokens) if cost else None)
        if item.id in seen:
            on_error(DataIntegrityError("Duplicate item id.", path=path, line=line_number, record_id=item.id))
            continue
        seen.add(item.id)
        items.append(item)
    return items
