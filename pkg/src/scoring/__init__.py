"""Per-location anomaly maps and image scores from flow outputs."""
