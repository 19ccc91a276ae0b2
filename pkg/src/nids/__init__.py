"""Naive Bayes, Bayesian-network and random-tree classifiers for NSL-KDD intrusion detection."""

__version__ = "0.1.0"
