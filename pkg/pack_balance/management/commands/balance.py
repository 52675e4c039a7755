"""
Assign work items to data-parallel groups by estimated FLOPs.
Usage: python -m toolkit balance --input items.jsonl --groups 8 --cost-mode quadratic --ctx 32768
"""

from functools import partial

from toolkit.commands import CurationCommand
from toolkit.jsonl import render_json, write_json
from pack_balance.scheduling import COST_MODES, balance_greedy, estimate_cost
from pack_balance.serializers import GroupAssignmentSerializer
from pack_balance.utils import load_work_items


class Command(CurationCommand):
    help = 'Greedy longest-processing-time load balancing'

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help='JSONL of {"id", "tokens", "cost"?}')
        parser.add_argument('--groups', type=int, required=True)
        parser.add_argument('--cost-mode', choices=COST_MODES, default=None)
        parser.add_argument('--ctx', type=int, default=None, help='Context length for the quadratic mode')
        parser.add_argument('--output', help='Assignment JSON (stdout if omitted)')

    def handle(self, *args, **options):
        path = self.require_file(options['input'])
        mode = self.setting_option(options, 'cost_mode', 'PACKING', 'COST_MODE')
        ctx = self.setting_option(options, 'ctx', 'PACKING', 'CTX')
        if options['groups'] < 1:
            raise self.usage_error("--groups must be at least 1.")
        cost = partial(estimate_cost, mode=mode, ctx=ctx)
        cost(1)  # fail fast on a bad mode or context length

        items = load_work_items(path, self.report_error, cost=cost)
        data = GroupAssignmentSerializer(balance_greedy(items, options['groups'])).data
        if options['output']:
            write_json(options['output'], data)
            self.stdout.write(self.style.SUCCESS(f"Balanced {len(items)} items, makespan {data['makespan']}"))
        else:
            self.stdout.write(render_json(data).decode('utf-8'))
