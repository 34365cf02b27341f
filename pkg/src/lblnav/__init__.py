"""Range-based long-baseline navigation filtering for underwater vehicles."""

__version__ = "0.1.0"
