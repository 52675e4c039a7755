"""
Shared behavior of the curation management commands.

Exit codes: 0 success, 1 data errors (count reported), 2 usage or
configuration errors.
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from Keye_Curation.exceptions import ConfigurationError, CurationError
from .conf import curation_setting

logger = logging.getLogger(__name__)

EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2


class CurationCommand(BaseCommand):
    """Base class for batch commands with data-error accounting."""

    requires_system_checks = []

    def execute(self, *args, **options):
        self.error_count = 0
        try:
            super().execute(*args, **options)
        except ConfigurationError as exc:
            raise CommandError(str(exc), returncode=EXIT_USAGE_ERROR) from exc
        except CurationError as exc:
            self.report_error(exc)
        self.finish()

    def report_error(self, exc):
        """Record one data error; processing of other records continues."""
        self.error_count += 1
        self.stderr.write(str(exc))
        logger.warning(str(exc))

    def finish(self):
        if self.error_count:
            raise CommandError(f"{self.error_count} data error(s)", returncode=EXIT_DATA_ERROR)

    def usage_error(self, message):
        return CommandError(message, returncode=EXIT_USAGE_ERROR)

    def require_file(self, path):
        if not Path(path).is_file():
            raise self.usage_error(f"Input file not found: {path}")
        return path

    def setting_option(self, options, name, section, key):
        """Command-line value when given (even 0), else KEYE_CURATION[section][key]."""
        value = options.get(name)
        return curation_setting(section, key) if value is None else value

    def add_seed_argument(self, parser):
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Seed for all randomness (default: KEYE_CURATION["SEED"])'
        )

    def resolve_seed(self, options):
        seed = options.get('seed')
        return curation_setting('SEED') if seed is None else seed

    def add_shard_arguments(self, parser):
        parser.add_argument('--shard-count', type=int, default=1, help='Total number of shards')
        parser.add_argument('--shard-index', type=int, default=0, help='Shard processed by this run')

    def resolve_shard(self, options):
        count, index = options['shard_count'], options['shard_index']
        if count < 1 or not 0 <= index < count:
            raise self.usage_error(f"Shard index {index} is not in [0, {count}).")
        return count, index
