"""Recommendation workbench: GMF preference features, epsilon-lexicase
top-k lists and cluster-based serendipity scoring."""

__version__ = "0.1.0"
