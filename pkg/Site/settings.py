"""
Django settings for the Attractors laboratory project.

The project has no web surface. Django hosts the numerical library as an app, supplies
the management-command CLI (manage.py validate|run|study) and the test runner.
"""

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
import os
import sys

from tzlocal import get_localzone

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Not a web site, but Django insists on one.
SECRET_KEY = 'attractors-lab-not-a-web-site'

DEFAULT_AUTO_FIELD = 'django.db.models.AutoField'

import platform
HOSTNAME = platform.node().lower()

TESTING = len(sys.argv) >= 2 and sys.argv[1] == 'test'

# Debug on developer machines unless asked otherwise, never while testing.
DEBUG = os.getenv('LAB_DEBUG', '0') == '1' and not TESTING

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = (
    'django.contrib.contenttypes',
    'Site',
    'Attractors',
)

MIDDLEWARE = ()

# The test runner wants a database even though no model is stored in one.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.path.join(BASE_DIR, 'lab.sqlite3'),
    },
}

LANGUAGE_CODE = 'en-us'

USE_I18N = False

USE_TZ = True

# Report timestamps are written in the local time of the machine running the study.
# The tzlocal package fills the hole Python leaves here.
TIME_ZONE = str(get_localzone())

# Laboratory knobs. Everything here can be overridden per study via JSON config, these
# are only the site-wide fallbacks.
LAB_OUTPUT_DIR = os.getenv('LAB_OUTPUT_DIR', os.path.join(BASE_DIR, 'output'))

# Default worker pool size for ensemble fan-out (--threads overrides).
import psutil
LAB_THREADS = psutil.cpu_count() or 1

LAB_SEED = 1

# Relative tolerance of the 2D conjugate-gradient H⁻¹ solves.
LAB_HMINUS1_RTOL = 1e-10

# Cells with M above this count as support.
LAB_SUPPORT_TOL = 1e-12

# Zero padded snapshot index width in M_####.fld
LAB_SNAPSHOT_DIGITS = 4

# Configure logging
LAB_LOG_LEVEL = os.getenv('LAB_LOG_LEVEL', 'DEBUG' if DEBUG else 'INFO')
LAB_LOG_FILE = os.getenv('LAB_LOG_FILE', None)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters':
        { 'dev': { 'format':
        '%(prefix)s%(relativeReference)9.4f, %(relativeLast)9.4f, %(run)12s, %(filename)20s:%(lineno)4d, %(funcName)20s - %(message)s%(postfix)s'},

         'live': { 'format':
         '%(asctime)s.%(msecs).03d  - %(relativeReference)9.4f - %(relativeLast)9.4f - %(process)d - %(thread)d - %(run)s - %(levelname)8s - %(filename)20s:%(lineno)4d - %(funcName)20s - %(message)s'}
        }
}

LOGGING['handlers'] = { 'console': {
                                'level': 'DEBUG',
                                'class': 'logging.StreamHandler',
                                'stream': sys.stdout,  # Optional but forces text black, without this DEBUG text is red.
                                'formatter': 'dev'
                                }
                       }

if LAB_LOG_FILE:
    # Long studies are easier to follow in a file that rolls over nightly.
    LOGGING['handlers']['file'] = {
                                'level': 'DEBUG',
                                'class': 'logging.handlers.TimedRotatingFileHandler',
                                'filename': LAB_LOG_FILE,
                                'when': 'midnight',
                                'formatter': 'live'
                                }

LOGGING['loggers'] = { 'Attractors': { 'handlers': list(LOGGING['handlers'].keys()),
                                       'level': 'WARNING' if TESTING else LAB_LOG_LEVEL } }

from Site.logutils import log
from logging import DEBUG as loglevel_DEBUG
import logging.config

# Log some config debugs
if DEBUG:
    import django  # So we have access to the version for reporting
    import numpy
    import scipy

    def pinfo():
        pid = os.getpid()
        P = psutil.Process(pid)
        return f'pid={pid}, name={P.name()}, commandline={P.cmdline()}, started={P.create_time()}'

    # Logging is not configured yet while settings load, so configure it explicitly to
    # be able to log from in here.
    log.setLevel(loglevel_DEBUG)
    logging.config.dictConfig(LOGGING)

    log.debug(f"Django version: {django.__version__}")
    log.debug(f"Python version: {sys.version}")
    log.debug(f"numpy {numpy.__version__}, scipy {scipy.__version__}")
    log.debug(f"Process Info: {pinfo()}")
    log.debug(f"Installed apps: {INSTALLED_APPS}")
    log.debug(f"Output dir: {LAB_OUTPUT_DIR}")
    log.debug(f"Threads: {LAB_THREADS}")
    log.debug(f"Testing: {TESTING}")
