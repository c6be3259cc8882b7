"""Numerical toolkit for finite-index inclusions of finite-dimensional C*-algebras."""

__version__ = "0.1.0"
