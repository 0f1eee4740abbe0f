"""Audio captioning engine with a self-contained autodiff core."""

__version__ = "0.1.0"
