"""Affine coupling flows: forward and inverse passes, gradients and checkpoints."""
