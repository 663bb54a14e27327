"""Traffic-light relevance estimation and detection evaluation."""
__version__ = "0.1.0"
