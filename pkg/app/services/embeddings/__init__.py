"""Word, symbol and feature embeddings of contexts."""
