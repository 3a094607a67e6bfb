"""End-to-end solver tests."""
