"""QA dataset generation, scoring, attribution, export, and comparison."""

__version__ = "0.1.0"
