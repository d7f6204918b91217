"""Reverse-mode autodiff over numpy arrays."""
