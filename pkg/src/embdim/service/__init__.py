"""HTTP service layer: FastAPI app plus pydantic wire schemas."""

from .app import create_app

__all__ = ["create_app"]
