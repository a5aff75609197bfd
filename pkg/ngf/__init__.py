"""Neighborhood graph filters, classical graph filters and small graph networks."""
