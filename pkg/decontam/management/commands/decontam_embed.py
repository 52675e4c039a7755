"""
Flag train image-question pairs whose embeddings match a benchmark sample.
Usage: python -m toolkit decontam-embed --train train.jsonl --bench bench.kyem --output flags.jsonl
"""

from Keye_Curation.exceptions import CurationError
from decontam.scans import EMBED_MODES, scan_embedding_leakage
from decontam.utils import load_embeddings
from toolkit.commands import CurationCommand
from toolkit.conf import curation_setting
from toolkit.jsonl import write_jsonl


class Command(CurationCommand):
    help = 'Dual-threshold embedding decontamination on precomputed embeddings'

    def add_arguments(self, parser):
        parser.add_argument('--train', required=True, help='Train embeddings (JSONL or KYEM1)')
        parser.add_argument('--bench', required=True, help='Benchmark embeddings (JSONL or KYEM1)')
        parser.add_argument('--output', required=True, help='Output JSONL of flagged ids')
        parser.add_argument('--image-threshold', type=float, default=None)
        parser.add_argument('--text-threshold', type=float, default=None)
        parser.add_argument('--mode', choices=EMBED_MODES, default=None, help='Combine thresholds with and/or')

    def handle(self, *args, **options):
        train_path = self.require_file(options['train'])
        bench_path = self.require_file(options['bench'])

        train = load_embeddings(train_path, self.report_error)
        bench = load_embeddings(bench_path, self.report_error)
        try:
            flagged = scan_embedding_leakage(
                train, bench,
                image_threshold=self.setting_option(options, 'image_threshold', 'DECONTAM', 'IMAGE_THRESHOLD'),
                text_threshold=self.setting_option(options, 'text_threshold', 'DECONTAM', 'TEXT_THRESHOLD'),
                mode=self.setting_option(options, 'mode', 'DECONTAM', 'EMBED_MODE'),
                tolerance=curation_setting('DECONTAM', 'NORM_TOLERANCE'),
            )
        except CurationError as exc:
            raise exc.with_context(path=f"{train_path},{bench_path}")

        write_jsonl(options['output'], ({'id': record_id} for record_id in sorted(flagged)))
        self.stdout.write(self.style.SUCCESS(f"Flagged {len(flagged)} of {len(train)} records"))
