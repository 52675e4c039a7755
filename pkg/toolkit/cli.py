"""
Batch command-line entry point.

    python -m toolkit <subcommand> [options]

Every subcommand is a Django management command owned by the app that
implements it; `run` resolves the subcommand and returns its exit code.
"""

import os
import sys

SUBCOMMANDS = {
    'hash': 'hash',
    'index': 'index',
    'dedup': 'dedup',
    'decontam-embed': 'decontam_embed',
    'filter-pairs': 'filter_pairs',
    'grounding': 'grounding',
    'budget': 'budget',
    'pack': 'pack',
    'balance': 'balance',
    'cursor': 'cursor',
    'merge': 'merge',
}

PROG = 'kyc'


def _usage():
    names = ', '.join(sorted(SUBCOMMANDS))
    return f"usage: {PROG} <subcommand> [options]\nsubcommands: {names}\n"


def run(argv):
    """Run one subcommand; returns the process exit code."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Keye_Curation.settings')
    import django
    from django.core.management import get_commands, load_command_class

    django.setup()
    argv = list(argv)
    if not argv or argv[0] in ('-h', '--help'):
        sys.stderr.write(_usage())
        return 0 if argv else 2

    name = SUBCOMMANDS.get(argv[0], argv[0].replace('-', '_'))
    if name not in SUBCOMMANDS.values():
        sys.stderr.write(f"{PROG}: unknown subcommand {argv[0]!r}\n{_usage()}")
        return 2

    command = load_command_class(get_commands()[name], name)
    try:
        command.run_from_argv([PROG, name, *argv[1:]])
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def main():
    sys.exit(run(sys.argv[1:]))
