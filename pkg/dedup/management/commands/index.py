"""
Build a KYDX1 signature index from hash JSONL.
Usage: python -m toolkit index --hashes bench_hashes.jsonl --output bench.kydx --seed 7
"""

from dedup.minhash import build_lsh_index
from dedup.serializers import ImageHashSerializer
from dedup.storage import save_index
from toolkit.commands import CurationCommand
from toolkit.jsonl import validated_records


class Command(CurationCommand):
    help = 'Build a MinHash LSH index over image hashes'

    def add_arguments(self, parser):
        parser.add_argument('--hashes', required=True, help='Hash JSONL produced by `hash`')
        parser.add_argument('--output', required=True, help='Output KYDX1 index file')
        parser.add_argument('--bands', type=int, default=None, help='Number of LSH bands')
        parser.add_argument('--rows', type=int, default=None, help='Signature rows per band')
        self.add_seed_argument(parser)

    def handle(self, *args, **options):
        path = self.require_file(options['hashes'])
        bands = self.setting_option(options, 'bands', 'DEDUP', 'BANDS')
        rows = self.setting_option(options, 'rows', 'DEDUP', 'ROWS_PER_BAND')

        records = [
            (data['id'], data['ones'])
            for _, data in validated_records(path, ImageHashSerializer, self.report_error)
        ]
        index = build_lsh_index(records, self.resolve_seed(options), bands, rows)
        save_index(index, options['output'])
        self.stdout.write(self.style.SUCCESS(
            f"Indexed {len(index)} images into {options['output']}"
        ))
