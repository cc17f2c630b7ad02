"""Motion correctness assessment from skeleton recordings with a Res-TCN."""

__version__ = "0.1.0"
