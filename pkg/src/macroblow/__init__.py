"""Detect, measure and refactor exponential macro expansion in a mini-Lisp."""

__version__ = "0.1.0"
