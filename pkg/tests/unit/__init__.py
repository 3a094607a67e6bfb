"""Unit tests for ncsvm modules."""
