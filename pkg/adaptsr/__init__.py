"""AdaptSR: low-rank adaptation of bicubic-pretrained super-resolution networks."""

__version__ = "0.1.0"
