"""Mapping, planning and simulation services."""
