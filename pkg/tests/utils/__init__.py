"""Tests for utility helpers and the worker pool."""
