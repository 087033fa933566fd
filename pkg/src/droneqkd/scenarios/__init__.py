"""Bundled scenario fixtures (*.scenario package data)."""
