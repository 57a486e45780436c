"""Mesh-free bounded-biharmonic skinning weights."""
