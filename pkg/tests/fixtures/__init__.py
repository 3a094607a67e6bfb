"""Synthetic data factories for ncsvm tests."""
