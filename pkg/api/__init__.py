"""
API package initialization.
"""
from api import routes, schemas

__all__ = ["routes", "schemas"]
