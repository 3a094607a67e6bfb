"""Test suite for ncsvm."""
