"""Solitary waves in 1D peridynamical media near the KdV limit."""
