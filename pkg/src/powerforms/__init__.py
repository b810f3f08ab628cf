"""Power network optimization with interchangeable formulations."""

__version__ = "0.1.0"
