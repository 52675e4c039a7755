"""
Create, inspect and verify KYCR1 resume cursors.
Usage:
    python -m toolkit cursor create --output run.cursor --epoch 0 --shard 2 --offset 100 --seed 7
    python -m toolkit cursor inspect --input run.cursor
    python -m toolkit cursor verify --input run.cursor
"""

from toolkit.commands import CurationCommand
from toolkit.jsonl import render_json
from pack_balance.cursor import ResumeCursor, read_cursor, write_cursor_atomic
from pack_balance.serializers import ResumeCursorSerializer


class Command(CurationCommand):
    help = 'Resume cursor utilities'

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest='action', required=True)

        create = actions.add_parser('create', help='Write a new cursor atomically')
        create.add_argument('--output', required=True)
        create.add_argument('--epoch', type=int, default=0)
        create.add_argument('--shard', type=int, default=0)
        create.add_argument('--offset', type=int, default=0)
        create.add_argument('--seed', type=int, default=None)

        for name, text in (('inspect', 'Print cursor fields as JSON'), ('verify', 'Check a cursor file')):
            action = actions.add_parser(name, help=text)
            action.add_argument('--input', required=True)

    def handle(self, *args, **options):
        getattr(self, f"handle_{options['action']}")(**options)

    def handle_create(self, **options):
        serializer = ResumeCursorSerializer(data={
            'epoch': options['epoch'],
            'shard_index': options['shard'],
            'sample_offset': options['offset'],
            'shuffle_seed': self.resolve_seed(options),
        })
        if not serializer.is_valid():
            raise self.usage_error(f"Invalid cursor fields: {serializer.errors}")
        cursor = ResumeCursor(**serializer.validated_data)
        write_cursor_atomic(options['output'], cursor)
        self.stdout.write(self.style.SUCCESS(f"Wrote cursor to {options['output']}"))

    def handle_inspect(self, **options):
        cursor = read_cursor(self.require_file(options['input']))
        self.stdout.write(render_json(ResumeCursorSerializer(cursor).data).decode('utf-8'))

    def handle_verify(self, **options):
        read_cursor(self.require_file(options['input']))
        self.stdout.write(self.style.SUCCESS("OK"))
