"""Tests for the manifolds package."""
