"""Tests for the second-order projection package."""
