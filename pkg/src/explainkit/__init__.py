"""Model explanation toolkit: surrogate trees, PD/ICE, LIME and Shapley values."""

__version__ = "0.1.0"
