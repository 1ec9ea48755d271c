from .recolor import recolor

__all__ = ['recolor']
