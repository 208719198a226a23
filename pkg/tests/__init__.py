"""Tests for voltspy."""
