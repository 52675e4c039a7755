"""
Grounding label tools.
Usage:
    python -m toolkit grounding validate --input labels.jsonl
    python -m toolkit grounding normalize --input pixel_boxes.jsonl --output annotations.jsonl
    python -m toolkit grounding emit --input annotations.jsonl --output labeled.jsonl
"""

from Keye_Curation.exceptions import CurationError
from grounding.annotations import normalize
from grounding.grammar import validate_label
from grounding.serializers import (
    GroundingRecordSerializer, LabelRecordSerializer, PixelGeometrySerializer,
    annotation_record
)
from toolkit.commands import CurationCommand
from toolkit.jsonl import validated_records, write_jsonl


class Command(CurationCommand):
    help = 'Validate, normalize and emit grounding labels'

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest='action', required=True)

        validate = actions.add_parser('validate', help='Check {"sample_id", "label"} lines')
        validate.add_argument('--input', required=True)

        normalize_parser = actions.add_parser('normalize', help='Pixel coordinates to [0, 1000) annotations')
        normalize_parser.add_argument('--input', required=True)
        normalize_parser.add_argument('--output', required=True)

        emit = actions.add_parser('emit', help='Render the label string of each annotation')
        emit.add_argument('--input', required=True)
        emit.add_argument('--output', required=True)

    def handle(self, *args, **options):
        path = self.require_file(options['input'])
        getattr(self, f"handle_{options['action']}")(path, options)

    def handle_validate(self, path, options):
        checked = 0
        for line, data in validated_records(path, LabelRecordSerializer, self.report_error, id_field='sample_id'):
            checked += 1
            for diagnostic in validate_label(data['label']):
                self.report_error(diagnostic.with_context(path=path, line=line, record_id=data['sample_id']))
        self.stdout.write(f"Checked {checked} labels")

    def handle_normalize(self, path, options):
        records = []
        for line, data in validated_records(path, PixelGeometrySerializer, self.report_error, id_field='sample_id'):
            try:
                records.append(annotation_record(data['sample_id'], normalize(data['geometry'])))
            except CurationError as exc:
                self.report_error(exc.with_context(path=path, line=line, record_id=data['sample_id']))
        write_jsonl(options['output'], records)
        self.stdout.write(self.style.SUCCESS(f"Normalized {len(records)} annotations"))

    def handle_emit(self, path, options):
        records = []
        for _, data in validated_records(path, GroundingRecordSerializer, self.report_error, id_field='sample_id'):
            records.append(annotation_record(data['sample_id'], data['annotation']))
        write_jsonl(options['output'], records)
        self.stdout.write(self.style.SUCCESS(f"Emitted {len(records)} labels"))
