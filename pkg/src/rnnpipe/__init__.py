"""Performance modelling, II balancing and fixed-point execution of multi-layer LSTM pipelines."""
__version__ = "0.1.0"
