"""Tests for the EMA triggering package."""
