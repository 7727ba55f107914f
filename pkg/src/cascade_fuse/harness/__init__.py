"""Monte Carlo harness, metrics, configuration, persistence and CLI."""
