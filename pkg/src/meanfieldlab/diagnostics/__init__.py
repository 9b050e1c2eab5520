"""
Information functionals, inequality constants and chaos metrics.

The submodules are

- ``information``: relative entropy, Fisher information, total variation and
  the perturbation potential on shared grids;
- ``inequalities``: test-function scans bounding log-Sobolev and Poincare
  constants from below;
- ``constants``: closed-form constants of the inequality statements;
- ``chaos``: marginal relative entropy of particle ensembles;
- ``convolution``: the ``L^1``-``L^p`` Riesz potential check.
"""

from meanfieldlab.diagnostics.chaos import ChaosEstimate, ChaosEstimator, marginal_kl
from meanfieldlab.diagnostics.constants import (
    ContractionConstants,
    GaussianMomentBound,
    bakry_emery_constant,
    contraction_constants,
    entropy_to_lsi_convention,
    gaussian_flow_constant,
    gaussian_moment_bound,
    high_temp_threshold,
    llf_condition,
    lp_growth_bound,
    lsi_constant_to_entropy_convention,
    perturbation_temperature_condition,
    uniform_poincare_bound,
)
from meanfieldlab.diagnostics.convolution import (
    ConvolutionCheck,
    calibrate_convolution_constant,
    convolution_inequality_check,
    gaussian_sup_ratio,
)
from meanfieldlab.diagnostics.inequalities import (
    ScanResult,
    TestFunctionFamily,
    lsi_scan,
    poincare_scan,
)
from meanfieldlab.diagnostics.information import (
    fisher_information,
    perturbation_potential,
    relative_entropy,
    total_variation,
)

__all__ = [
    "ChaosEstimate",
    "ChaosEstimator",
    "ContractionConstants",
    "ConvolutionCheck",
    "GaussianMomentBound",
    "ScanResult",
    "TestFunctionFamily",
    "bakry_emery_constant",
    "calibrate_convolution_constant",
    "contraction_constants",
    "convolution_inequality_check",
    "entropy_to_lsi_convention",
    "fisher_information",
    "gaussian_flow_constant",
    "gaussian_moment_bound",
    "gaussian_sup_ratio",
    "high_temp_threshold",
    "llf_condition",
    "lp_growth_bound",
    "lsi_constant_to_entropy_convention",
    "lsi_scan",
    "marginal_kl",
    "perturbation_potential",
    "perturbation_temperature_condition",
    "poincare_scan",
    "relative_entropy",
    "total_variation",
    "uniform_poincare_bound",
]
