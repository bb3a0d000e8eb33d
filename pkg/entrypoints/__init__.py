"""Command-line entrypoints for polycgo"""
