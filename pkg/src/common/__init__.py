"""Runtime settings, logging setup and the shared error hierarchy."""
