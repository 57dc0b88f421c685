"""
Django settings for bagod_backend project.

Detection backend for blind asynchronous goal-oriented activity detection.
Every algorithm default is collected in the ``BAGOD`` dict at the bottom and
can be overridden with a ``BAGOD_<KEY>`` environment variable.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv
import dj_database_url

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-bagod-default-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = os.environ.get('ALLOWED_HOSTS', 'localhost,127.0.0.1,testserver').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',

    # Third-party apps
    'rest_framework',
    'django_filters',

    # Local apps
    'arrays',
    'scenarios',
    'solvers',
    'spectrum',
    'recovery',
    'identification',
    'baselines',
    'experiments',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'whitenoise.middleware.WhiteNoiseMiddleware',  # WhiteNoise for static files
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'bagod_backend.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'bagod_backend.wsgi.application'


# Database
# SQLite for desk-scale runs; DATABASE_URL switches to PostgreSQL (psycopg2).

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

if os.environ.get('DATABASE_URL'):
    DATABASES['default'] = dj_database_url.parse(os.environ.get('DATABASE_URL'))


# Password validation

AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
    },
]


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (admin only)

STATIC_URL = '/static/'
STATIC_ROOT = os.path.join(BASE_DIR, 'staticfiles')

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework settings
REST_FRAMEWORK = {
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.IsAuthenticatedOrReadOnly',
    ],
    'DEFAULT_FILTER_BACKENDS': [
        'django_filters.rest_framework.DjangoFilterBackend',
    ],
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 20,
}

# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': os.getenv('DJANGO_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}

# Every local app logs under its own package name.
for _app in ('arrays', 'scenarios', 'solvers', 'spectrum', 'recovery',
             'identification', 'baselines', 'experiments'):
    LOGGING['loggers'][_app] = {
        'handlers': ['console'],
        'level': os.getenv('BAGOD_LOG_LEVEL', 'INFO'),
        'propagate': False,
    }


def _env(key, default, cast):
    raw = os.environ.get(f'BAGOD_{key}')
    if raw is None:
        return default
    if cast is bool:
        return raw.lower() in ('1', 'true', 'yes')
    return cast(raw)


# Detection pipeline defaults
BAGOD = {
    # goal-oriented SDP
    'ADMM_TOLERANCE': _env('ADMM_TOLERANCE', 1e-4, float),
    'ADMM_MAX_ITER': _env('ADMM_MAX_ITER', 5000, int),
    'ADMM_RHO': _env('ADMM_RHO', 1.0, float),
    'ADMM_ADAPT_RHO': _env('ADMM_ADAPT_RHO', True, bool),
    'ETA_FLOOR': _env('ETA_FLOOR', 1e-3, float),
    'FEASIBILITY_GRID': _env('FEASIBILITY_GRID', 4096, int),
    'REFERENCE_MAX_N': _env('REFERENCE_MAX_N', 16, int),
    # spectrum
    'SPECTRUM_GRID': _env('SPECTRUM_GRID', 8192, int),
    'PEAK_REL_THRESHOLD': _env('PEAK_REL_THRESHOLD', 0.5, float),
    # alternating minimization
    'AM_TOLERANCE': _env('AM_TOLERANCE', 1e-8, float),
    'AM_MAX_ITER': _env('AM_MAX_ITER', 200, int),
    'AM_RIDGE': _env('AM_RIDGE', 1e-9, float),
    # identification
    'ANGLE_TOLERANCE_DEG': _env('ANGLE_TOLERANCE_DEG', 1.0, float),
    'CORRELATION_THRESHOLD': _env('CORRELATION_THRESHOLD', 0.8, float),
    'SECTORS': _env('SECTORS', 4, int),
    # AMP baseline
    'AMP_MAX_ITER': _env('AMP_MAX_ITER', 50, int),
    'AMP_DAMPING': _env('AMP_DAMPING', 0.7, float),
    'AMP_ACTIVITY_THRESHOLD': _env('AMP_ACTIVITY_THRESHOLD', 0.5, float),
    # experiments
    'TRIALS': _env('TRIALS', 50, int),
    'THREADS': _env('THREADS', 1, int),
    'OUTPUT_DIR': Path(os.environ.get('BAGOD_OUTPUT_DIR', BASE_DIR / 'output')),
}
