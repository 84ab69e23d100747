"""Shared command components."""
