"""CLI package for quasi-slab."""
