"""
Flag train samples that near-duplicate benchmark images.
Usage:
    python -m toolkit dedup --train-manifest train.jsonl --train-hashes train_hashes.jsonl \
        --index bench.kydx --bench-manifest bench.jsonl \
        --flags-output flags.jsonl --report-output report.csv
"""

import logging

from Keye_Curation.exceptions import DataIntegrityError
from decontam.reports import REPORT_FORMATS, emit_report
from decontam.scans import benchmark_lookup, build_report, flag_samples, match_images
from decontam.serializers import FlaggedSampleSerializer
from decontam.utils import load_manifest
from dedup.serializers import ImageHashSerializer
from dedup.storage import load_index
from toolkit.commands import CurationCommand
from toolkit.conf import worker_count
from toolkit.jsonl import shard_of, validated_records, write_jsonl

logger = logging.getLogger(__name__)


class Command(CurationCommand):
    help = 'Scan train samples against a benchmark hash index (whole-sample drop rule)'

    def add_arguments(self, parser):
        parser.add_argument('--train-manifest', required=True, help='Train manifest JSONL')
        parser.add_argument('--train-hashes', required=True, help='Hash JSONL of the train images')
        parser.add_argument('--index', required=True, help='KYDX1 index over benchmark images')
        parser.add_argument(
            '--bench-manifest',
            help='Benchmark manifest JSONL, used to attribute hits to benchmarks'
        )
        parser.add_argument('--flags-output', required=True, help='Output JSONL of flagged samples')
        parser.add_argument('--report-output', required=True, help='Output leakage report')
        parser.add_argument('--report-format', choices=REPORT_FORMATS, default='csv')
        self.add_seed_argument(parser)
        self.add_shard_arguments(parser)

    def handle(self, *args, **options):
        for key in ('train_manifest', 'train_hashes', 'index'):
            self.require_file(options[key])
        if options['bench_manifest']:
            self.require_file(options['bench_manifest'])
        shard_count, shard_index = self.resolve_shard(options)

        index = load_index(options['index'])
        seed = index.seed if options['seed'] is None else options['seed']

        train = [
            entry for entry in load_manifest(options['train_manifest'], self.report_error)
            if shard_of(entry.sample_id, shard_count) == shard_index
        ]
        hashes = {}
        for line_number, data in validated_records(options['train_hashes'], ImageHashSerializer, self.report_error):
            if data['id'] in hashes:
                self.report_error(DataIntegrityError(
                    "Duplicate image id.", path=options['train_hashes'], line=line_number, record_id=data['id'],
                ))
                continue
            hashes[data['id']] = data['ones']

        complete = []
        for entry in train:
            missing = [image_id for image_id in entry.image_ids if image_id not in hashes]
            if missing:
                self.report_error(DataIntegrityError(
                    f"No hash for image(s) {', '.join(missing)}.",
                    path=options['train_hashes'], record_id=entry.sample_id,
                ))
            else:
                complete.append(entry)

        benchmark_of = None
        if options['bench_manifest']:
            benchmark_of = benchmark_lookup(
                entry for entry in load_manifest(options['bench_manifest'], self.report_error)
                if entry.split == 'benchmark'
            )

        image_ids = [image_id for entry in complete for image_id in entry.image_ids]
        matches = match_images(image_ids, hashes, index, seed, benchmark_of, workers=worker_count())
        flagged = flag_samples(complete, matches)
        report = build_report(complete, flagged)

        by_id = {entry.sample_id: entry for entry in complete}
        write_jsonl(options['flags_output'], (
            FlaggedSampleSerializer({
                'sample_id': sample_id,
                'benchmarks': list(flagged[sample_id]),
                'images': [i for i in by_id[sample_id].image_ids if i in matches],
            }).data
            for sample_id in sorted(flagged)
        ))
        with open(options['report_output'], 'wb') as f:
            f.write(emit_report(report, options['report_format']))

        logger.info(f"dedup: {len(flagged)} of {len(complete)} samples flagged")
        self.stdout.write(self.style.SUCCESS(
            f"Flagged {len(flagged)} of {len(complete)} samples; report written to {options['report_output']}"
        ))
