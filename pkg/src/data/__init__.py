"""Synthetic dataset generation and the on-disk feature dataset format."""
