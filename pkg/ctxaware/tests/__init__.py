"""Tests for ctxaware."""
