"""Distant-supervision annotation."""
