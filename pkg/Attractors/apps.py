from django.apps import AppConfig


class AttractorsConfig(AppConfig):
    name = 'Attractors'
    verbose_name = 'Degenerate chemotaxis attractor laboratory'
