"""
Access to the KEYE_CURATION settings dict.
"""

import os

from django.conf import settings


def curation_setting(section, key=None):
    """Return KEYE_CURATION[section] or KEYE_CURATION[section][key]."""
    value = settings.KEYE_CURATION[section]
    if key is not None:
        value = value[key]
    return value


def worker_count():
    """Worker bound: KYC_THREADS at call time, else the configured default."""
    raw = os.getenv('KYC_THREADS')
    count = int(raw) if raw and raw.strip().isdigit() else settings.KEYE_CURATION['THREADS']
    return max(1, count)
