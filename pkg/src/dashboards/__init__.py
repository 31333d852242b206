"""Manifest and trace dashboards."""
