"""Stratified MCMC by the injection measure method.

Modules: ``kernels`` (finite chains, Euler-Maruyama SDEs), ``strata``
(regions, partition of unity, exit rule), ``trajectory`` (exit sampling),
``injection`` (G matrix and weight updates), ``estimator`` (histograms and
error metrics), ``oracle`` (exact finite-chain quantities), ``cli``.
"""

from .errors import StratMCError
from .estimator import Grid, WeightedHistogram, tv_distance
from .injection import EmpiricalMeasure, InjectionState, run_method
from .kernels import DiscreteChain, MaierSteinParams, SdeKernel, maier_stein_kernel
from .strata import KappaDistribution, StrataDef, build_fig2_setup

__version__ = "0.1.0"

__all__ = ["StratMCError", "Grid", "WeightedHistogram", "tv_distance", "EmpiricalMeasure",
           "InjectionState", "run_method", "DiscreteChain", "MaierSteinParams", "SdeKernel",
           "maier_stein_kernel", "KappaDistribution", "StrataDef", "build_fig2_setup"]
