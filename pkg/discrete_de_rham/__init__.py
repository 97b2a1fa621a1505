"""Discrete de Rham and VEM-inspired complexes of arbitrary degree on polytopal meshes."""

__version__ = "0.1.0"
