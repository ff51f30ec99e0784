"""Pytest configuration; test helpers live in helpers.py next to this file."""
