"""Random walk driven by conductances from a symmetric exclusion process.

Monte Carlo simulation (:mod:`exclusim.dynamics`), an exact small-torus
oracle (:mod:`exclusim.oracle`) and ensemble statistics (:mod:`exclusim.stats`).
"""
__version__ = "0.1.0"
