"""Numerical ergodic theory on skew products: sampling, spectra, invariants."""
from .harmonics import degree_basis, gauss_sphere_grid, midpoint_sphere_grid, sph_harm
from .invariants import (BundleSample, FixedSpace, PsiReport, anchor_transport, build_Q_bundle,
                         check_invariant, extend_invariant, fixed_vector_space, hausdorff)
from .montecarlo import (AnosovAlternativeReport, BirkhoffResult, CorrelationSeries, CounterexampleReport,
                         SuspensionSystem, anosov_alternative_suite, birkhoff_average, birkhoff_averages,
                         correlation, product_circle_counterexample)
from .observables import Observable
from .spectrum import EigenSearchReport, KoopmanTruncation, koopman_truncation, twisted_eigen_search

__all__ = [
    "AnosovAlternativeReport", "BirkhoffResult", "BundleSample", "CorrelationSeries", "CounterexampleReport",
    "EigenSearchReport", "FixedSpace", "KoopmanTruncation", "Observable", "PsiReport", "SuspensionSystem",
    "anchor_transport", "anosov_alternative_suite", "birkhoff_average", "birkhoff_averages",
    "build_Q_bundle", "check_invariant", "correlation", "degree_basis", "extend_invariant",
    "fixed_vector_space", "gauss_sphere_grid", "hausdorff", "koopman_truncation", "midpoint_sphere_grid",
    "product_circle_counterexample", "sph_harm", "twisted_eigen_search",
]
