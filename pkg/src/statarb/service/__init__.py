from . import schemas

__all__ = ["schemas"]
