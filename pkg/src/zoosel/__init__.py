"""Forward-free model-zoo selection for zero-shot time-series forecasting."""

__version__ = "0.1.0"
