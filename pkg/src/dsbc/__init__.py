"""Damped spin-boson chain simulation toolkit."""
