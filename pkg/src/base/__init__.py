"""Diagonal Gaussian base distribution with learnable per-location mean and scale."""
