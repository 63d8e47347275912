"""Exact and randomized checks of the auxiliary lemmas: combinatorics, localization, kernels and probes.

Submodules are imported on demand; ``prhf.regularity`` depends on
:mod:`prhf.verify.multiindex` and this package must stay import-light.
"""
