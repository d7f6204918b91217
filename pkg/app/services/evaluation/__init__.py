"""Neutral augmentation, cross-validation and document-level F1."""
