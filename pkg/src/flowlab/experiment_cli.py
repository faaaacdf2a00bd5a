"""Placeholder, implemented below."""
