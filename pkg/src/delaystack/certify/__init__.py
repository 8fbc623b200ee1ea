"""Sample-based certificate checks: Lyapunov, Razumikhin, small-gain, linear time-varying, robustness, WIOS."""

from .derivatives import dini_derivative, generalized_derivative, sigma_at, sigma_from_rho
from .linear_tv import DomainError, LinearTvSystem, certify_linear_tv, lti_condition, weight_phi
from .lyapunov import (LyapunovSpecFde, LyapunovSpecRfde, RazumikhinSpec, build_fde_functional,
                       check_lyapunov_fde, check_lyapunov_rfde, check_razumikhin)
from .robustness import check_robust_equilibrium, invert, robustness_radius
from .samples import ScenarioSample, harvested_samples, mixed_samples, random_samples
from .smallgain import certify_example_4_1, search_example_4_1
from .wios import WiosEstimate, estimate_wios

__all__ = [
    "DomainError", "LinearTvSystem", "LyapunovSpecFde", "LyapunovSpecRfde", "RazumikhinSpec",
    "ScenarioSample", "WiosEstimate", "build_fde_functional", "certify_example_4_1", "certify_linear_tv",
    "check_lyapunov_fde", "check_lyapunov_rfde", "check_razumikhin", "check_robust_equilibrium",
    "dini_derivative", "estimate_wios", "generalized_derivative", "harvested_samples", "invert",
    "lti_condition", "mixed_samples", "random_samples", "robustness_radius", "search_example_4_1",
    "sigma_at", "sigma_from_rho", "weight_phi",
]
