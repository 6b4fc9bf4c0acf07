"""Risk-consistent learning from proper partial labels."""

__version__ = "0.1.0"
