"""twinlab: energy scaling of twinning with variable volume fraction.

A small numerical laboratory for a two-variant martensite model on the cube
(-1, 1)^3: pointwise energy densities, grid discretisations, the explicit
laminate constructions, an alternating minimiser, slice duality certificates
and scaling sweeps.
"""

__version__ = "0.1.0"
