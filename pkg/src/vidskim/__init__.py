"""Zero-shot, text-queryable video summarization with a benchmark evaluation harness."""

__version__ = "0.1.0"
