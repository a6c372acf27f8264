"""Monotone iteration for singular two-point boundary value problems."""
