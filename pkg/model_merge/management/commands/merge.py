"""
Average checkpoints stored in the flat parameter container.
Usage: python -m toolkit merge --inputs a.kyp b.kyp --weights 0.25 0.75 --output merged.kyp
"""

from toolkit.commands import CurationCommand
from model_merge.merging import merge_average
from model_merge.params import read_param_map, write_param_map


class Command(CurationCommand):
    help = 'Weight-space average of same-architecture checkpoints'

    def add_arguments(self, parser):
        parser.add_argument('--inputs', nargs='+', required=True, help='Container files to merge')
        parser.add_argument('--weights', nargs='+', type=float, default=None, help='One weight per input')
        parser.add_argument('--output', required=True)

    def handle(self, *args, **options):
        paths = [self.require_file(path) for path in options['inputs']]
        weights = options['weights']
        if weights is not None and len(weights) != len(paths):
            raise self.usage_error(f"Got {len(weights)} weights for {len(paths)} inputs.")

        models = [read_param_map(path) for path in paths]
        merged = merge_average(models, weights)
        write_param_map(options['output'], merged)
        self.stdout.write(self.style.SUCCESS(f"Merged {len(paths)} checkpoints into {options['output']}"))
