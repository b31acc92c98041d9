"""Input-denoising and model-verification ensemble defense toolkit."""

__version__ = "0.1.0"
