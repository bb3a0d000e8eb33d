"""
Tests for polycgo
"""
