"""Graphs of Hecke operators on P^1 with level structure, and their eigenforms."""

__version__ = "0.1.0"
