"""Training, annotation, evaluation and analysis services."""
