"""Compiled kernels (Cython). Import through :mod:`vcdet.kernels`."""
