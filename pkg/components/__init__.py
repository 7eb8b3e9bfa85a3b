"""Toolkit components. Each package exposes setup(cli, settings) and a DEFAULT_CONFIG."""
