"""Flow-based anomaly detection with a learnable Gaussian base."""
