"""Tests for the projection package."""
