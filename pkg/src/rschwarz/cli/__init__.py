"""Command-line experiments: config, map archive and commands."""
