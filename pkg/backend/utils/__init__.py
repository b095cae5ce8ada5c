"""Geometry helpers and the exception hierarchy."""
