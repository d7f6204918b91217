"""Bag-structured training."""
