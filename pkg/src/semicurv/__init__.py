"""Semi-supervised curvilinear structure segmentation."""

__version__ = "0.1.0"
