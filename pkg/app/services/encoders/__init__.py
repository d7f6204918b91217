"""Context encoders and classification models."""
