"""Reduced Schwarz solver package."""


def main():
    """Console entry point; imported lazily so `rschwarz.config` loads first."""
    from rschwarz.cli.main import main as _main

    return _main()
