"""Document-grounded task-oriented dialog: detection, selection, generation and evaluation."""

__version__ = "0.1.0"
