"""
Pack sequences into fixed-capacity bins (first-fit decreasing).
Usage: python -m toolkit pack --input items.jsonl --capacity 32768 --output plan.json
"""

from toolkit.commands import CurationCommand
from toolkit.jsonl import render_json, write_json
from pack_balance.scheduling import pack_ffd
from pack_balance.serializers import PackPlanSerializer
from pack_balance.utils import load_work_items


class Command(CurationCommand):
    help = 'Pack sequences into bins of a fixed token capacity'

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help='JSONL of {"id", "tokens"}')
        parser.add_argument('--capacity', type=int, default=None, help='Tokens per bin')
        parser.add_argument('--output', help='Plan JSON (stdout if omitted)')

    def handle(self, *args, **options):
        path = self.require_file(options['input'])
        capacity = self.setting_option(options, 'capacity', 'PACKING', 'CAPACITY')

        items = load_work_items(path, self.report_error)
        data = PackPlanSerializer(pack_ffd(items, capacity)).data
        if options['output']:
            write_json(options['output'], data)
            self.stdout.write(self.style.SUCCESS(f"Packed {len(items)} items into {len(data['bins'])} bins"))
        else:
            self.stdout.write(render_json(data).decode('utf-8'))
