# Settings for the Keye curation toolkit

import os
from pathlib import Path

# Build paths inside the project
BASE_DIR = Path(__file__).resolve().parent.parent
LOGS_DIR = Path(os.getenv('KYC_LOGS_DIR', BASE_DIR / 'logs'))
LOGS_DIR.mkdir(parents=True, exist_ok=True)

# The toolkit serves nothing; the key only satisfies Django's startup checks.
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'keye-curation-batch-toolkit')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    # Third party apps
    'rest_framework',

    # Local apps
    'toolkit',
    'dedup',
    'decontam',
    'grounding',
    'vision_budget',
    'pack_balance',
    'model_merge',
]

MIDDLEWARE = []

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# REST Framework Configuration
# Only serializers and the JSON renderer are used; output must be byte-stable.
# No auth or database apps are installed.
REST_FRAMEWORK = {
    'COMPACT_JSON': True,
    'UNICODE_JSON': True,
    'STRICT_JSON': True,
    'COERCE_DECIMAL_TO_STRING': False,
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}

# Curation Configuration
KEYE_CURATION = {
    'SEED': int(os.getenv('KYC_SEED', '0')),
    'THREADS': int(os.getenv('KYC_THREADS', str(os.cpu_count() or 1))),
    'DEDUP': {
        'BANDS': 32,
        'ROWS_PER_BAND': 4,
    },
    'DECONTAM': {
        'IMAGE_THRESHOLD': 0.98,
        'TEXT_THRESHOLD': 0.50,
        'EMBED_MODE': 'and',
        'PAIR_SCORE_THRESHOLD': 0.9,
        'NORM_TOLERANCE': 1e-3,
    },
    'BUDGET': {
        'PATCH': 14,
        'MERGE': 2,
        'IMAGE_CAP': 16384,
        'FRAME_MIN': 128,
        'FRAME_MAX': 768,
        'VIDEO_CAP': 24576,
        'TICK': 0.5,
        'BASE_FPS': 2.0,
    },
    'PACKING': {
        'COST_MODE': 'linear',
        'CTX': 32768,
        'CAPACITY': 32768,
    },
}

# Logging Configuration
LOG_LEVEL = os.getenv('KYC_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
        'file': {
            'class': 'logging.FileHandler',
            'filename': LOGS_DIR / 'curation.log',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
        **{
            app: {
                'handlers': ['console', 'file'],
                'level': LOG_LEVEL,
                'propagate': False,
            }
            for app in (
                'toolkit', 'dedup', 'decontam', 'grounding',
                'vision_budget', 'pack_balance', 'model_merge',
            )
        },
    },
}
