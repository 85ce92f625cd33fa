"""Tri-level distributionally robust representation learning for time series,
solved by a cutting-plane stratified localization method, with a synthetic
leave-one-domain-out benchmark and ERM / GroupDRO baselines."""

__version__ = "0.1.0"
