"""Bundled example scenarios, addressable by name through the CLI."""
