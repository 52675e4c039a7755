"""
Hash images into pHash JSONL.
Usage: python -m toolkit hash --input images.jsonl --output hashes.jsonl [--shard-count N --shard-index I]
"""

import logging
from pathlib import Path

from Keye_Curation.exceptions import CurationError
from dedup.hashing import compute_phash
from dedup.serializers import ImageSourceSerializer, hash_record
from toolkit.commands import CurationCommand
from toolkit.images import decode_image
from toolkit.jsonl import shard_of, validated_records, write_jsonl
from toolkit.pool import bounded_map

logger = logging.getLogger(__name__)


class Command(CurationCommand):
    help = 'Compute 64-bit perceptual hashes for a list of images'

    def add_arguments(self, parser):
        parser.add_argument(
            '--input',
            required=True,
            help='JSONL of {"id", "path"}; relative paths resolve against the file'
        )
        parser.add_argument('--output', required=True, help='Output JSONL of {"id", "phash", "ones"}')
        parser.add_argument('--progress', action='store_true', help='Show a progress bar on stderr')
        self.add_shard_arguments(parser)

    def handle(self, *args, **options):
        source = Path(self.require_file(options['input']))
        shard_count, shard_index = self.resolve_shard(options)

        jobs = [
            (line, data['id'], source.parent / data['path'])
            for line, data in validated_records(source, ImageSourceSerializer, self.report_error)
            if shard_of(data['id'], shard_count) == shard_index
        ]

        def hash_one(job):
            line, image_id, path = job
            try:
                return hash_record(image_id, compute_phash(decode_image(path)))
            except CurationError as exc:
                return exc.with_context(line=line, record_id=image_id)

        results = bounded_map(hash_one, jobs, progress='hash' if options['progress'] else None)
        records = []
        for result in results:
            if isinstance(result, CurationError):
                self.report_error(result)
            else:
                records.append(result)

        write_jsonl(options['output'], records)
        logger.info(f"Hashed {len(records)} images (shard {shard_index}/{shard_count})")
        self.stdout.write(self.style.SUCCESS(f"Hashed {len(records)} images into {options['output']}"))
