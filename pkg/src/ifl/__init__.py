"""Card-authorization learning under delayed, censored, corrupted and
counterfactually suppressed feedback."""

__version__ = "0.1.0"
