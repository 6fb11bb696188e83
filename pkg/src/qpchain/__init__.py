"""Toolkit for preparing, propagating and detecting quasiparticle wave packets
on interacting qutrit-chain vacua.

Pipeline: symmetry-resolved exact diagonalization -> maximally localized
Wannier functions -> unitary dressed creation operators -> MPS scattering
runs -> species-resolved detection and resonance bounds.
"""

__version__ = "0.1.0"
