"""
Keep image-caption pairs whose precomputed score exceeds a threshold.
Usage: python -m toolkit filter-pairs --input scores.jsonl --kept kept.jsonl --dropped dropped.jsonl
"""

from decontam.scans import filter_pair_score
from decontam.serializers import PairScoreSerializer
from toolkit.commands import CurationCommand
from toolkit.jsonl import validated_records, write_jsonl


class Command(CurationCommand):
    help = 'Threshold filter on precomputed pair scores (strict >)'

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help='JSONL of {"id", "score"}')
        parser.add_argument('--kept', required=True, help='Output JSONL of kept ids')
        parser.add_argument('--dropped', required=True, help='Output JSONL of dropped ids')
        parser.add_argument('--threshold', type=float, default=None)

    def handle(self, *args, **options):
        path = self.require_file(options['input'])
        threshold = self.setting_option(options, 'threshold', 'DECONTAM', 'PAIR_SCORE_THRESHOLD')

        records = [
            (data['id'], data['score'])
            for _, data in validated_records(path, PairScoreSerializer, self.report_error)
        ]
        kept, dropped = filter_pair_score(records, threshold)
        write_jsonl(options['kept'], ({'id': record_id} for record_id in kept))
        write_jsonl(options['dropped'], ({'id': record_id} for record_id in dropped))
        self.stdout.write(self.style.SUCCESS(f"Kept {len(kept)}, dropped {len(dropped)}"))
