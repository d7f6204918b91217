"""Run configuration and process settings."""
