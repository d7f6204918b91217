"""Sentiment attitude extraction toolkit: context encoders, distant supervision and attention analysis."""
