"""Isometric extensions of hyperbolic toral automorphisms.

Skew products over a cat map with circle or SO(3) fibers: leaf holonomies,
Parry elements of homoclinic loops, the transitivity group they generate,
and numerical checks of ergodicity of the extension.
"""
__version__ = "0.1.0"
