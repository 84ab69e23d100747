"""Tests for the flow package."""
