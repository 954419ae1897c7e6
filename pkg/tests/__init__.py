"""Unit test package for semicox."""
