"""pilemap: dynamic GPIS mapping and next-best-view planning for pile picking."""
