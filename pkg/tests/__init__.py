"""Unit tests for pilemap."""
