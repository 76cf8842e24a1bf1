"""Correlation-informed neural networks (CoINN) for two-phase frictional pressure drop."""
__version__ = "0.1.0"
