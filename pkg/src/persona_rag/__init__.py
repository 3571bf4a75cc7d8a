"""Persona generation, hybrid retrieval, and paired-evaluation workbench."""

__version__ = "0.1.0"
