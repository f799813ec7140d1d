"""Experiment configuration, report artifacts and the `altflow` command-line entrypoint."""
