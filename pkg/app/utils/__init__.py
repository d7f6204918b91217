"""Markup parsing, term sequences and desk file formats."""
