"""Entry point for the pofrailty command-line tool."""

from __future__ import annotations

from pofrailty.cli import run


def main() -> None:
    """Run the CLI and exit with its status code."""
    raise SystemExit(run())


if __name__ == "__main__":
    main()
