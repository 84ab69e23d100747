"""Tests for the winding package."""
