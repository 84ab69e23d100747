"""Tests for the orbits package."""
