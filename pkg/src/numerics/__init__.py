"""Dense float64 tensors, seeded random streams and the binary tensor container."""
