"""Command layer binding configuration to services."""
