"""Tests for configuration, storage and the command line."""
