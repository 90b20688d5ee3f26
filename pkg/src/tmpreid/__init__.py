"""Take-more-positives contrastive learning with pseudo-labels on vector data."""

__version__ = "0.1.0"
