"""FastAPI service wrapping :func:`dwmap.solve.solve`."""

from dwmap.service.app import create_app

__all__ = ["create_app"]
