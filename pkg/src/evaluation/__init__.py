"""AUROC metrics and windowed stability summaries."""
