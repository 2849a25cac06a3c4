"""Worked models from the theory and independent oracles to check them."""

from .oracles import (DuffingExact, PosteriorQuadrature, duffing_sigma, oracle_circle_moment,
                      oracle_duffing, oracle_inverse_gamma_moment, oracle_lyapunov,
                      oracle_posterior)
from .posterior import (PosteriorReport, RecurrenceDataset, build_langevin, generate_recurrence,
                        posterior_bounds, posterior_potential, read_dataset, sample_noise,
                        write_dataset)
from .reliability import ReliabilityResult, duffing_model, poisson_probability, reliability_bounds
from .simulate import DivergenceError, TimeAverage, simulate_time_average

__all__ = [
    "DuffingExact", "PosteriorQuadrature", "duffing_sigma", "oracle_circle_moment",
    "oracle_duffing", "oracle_inverse_gamma_moment", "oracle_lyapunov", "oracle_posterior",
    "PosteriorReport", "RecurrenceDataset", "build_langevin", "generate_recurrence",
    "posterior_bounds", "posterior_potential", "read_dataset", "sample_noise", "write_dataset",
    "ReliabilityResult", "duffing_model", "poisson_probability", "reliability_bounds",
    "DivergenceError", "TimeAverage", "simulate_time_average",
]
