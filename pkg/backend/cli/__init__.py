"""Command-line entry points: simulate, ablate, benchmark and export-mesh."""
