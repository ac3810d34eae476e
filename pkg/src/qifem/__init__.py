"""Patchwise quasi-interpolation on simplicial meshes with certified,
fully computable error constants and guaranteed error bounds."""

__version__ = "0.1.0"
