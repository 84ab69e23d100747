"""Tests for the connections package."""
