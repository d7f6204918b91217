"""Attention weight analysis."""
