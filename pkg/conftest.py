# Test collection wiring: the suite is written for Django's test runner
# (python manage.py test tests); point pytest at the same settings.
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "Site.settings")
django.setup()
