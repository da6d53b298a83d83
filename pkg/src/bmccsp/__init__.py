"""Bayesian matrix completion for causal inference on panel data."""

from .effects import atet_posterior, credible_interval, eigenvalue_summary, loading_summary
from .panel import CsvSchema, PanelData, TreatmentSpec, build_mask, load_panel_csv, validate
from .sampler import PosteriorDraws, SamplerConfig, run_mcmc

__all__ = [
    "CsvSchema",
    "PanelData",
    "PosteriorDraws",
    "SamplerConfig",
    "TreatmentSpec",
    "atet_posterior",
    "build_mask",
    "credible_interval",
    "eigenvalue_summary",
    "load_panel_csv",
    "loading_summary",
    "run_mcmc",
    "validate",
]
