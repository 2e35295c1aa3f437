"""Motional heating rates from technical voltage noise.

Two coupling routes into a mode at secular frequency omega:

* noise at omega on a DC electrode drives the ion through the field it
  makes at the ion, set by the characteristic distance D of the electrode:
  rate = q^2/(4 m hbar omega) * S_V / D^2;

* noise at Omega +- omega on the RF electrode modulates the pseudopotential
  and couples through its gradient:
  rate = q^4/(16 m^3 hbar Omega^4 omega) * grad^2 * S_V / V0^2,
  with S_V the summed PSD of both sidebands.

Rates are quanta per second throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import ELEMENTARY_CHARGE, HBAR, SR88_ION_MASS


@dataclass(frozen=True)
class IonSpecies:
    mass: float    # kg
    charge: float  # C

    def __post_init__(self):
        if self.mass <= 0 or self.charge <= 0:
            raise ValueError("ion mass and charge must be positive")


SR88 = IonSpecies(mass=SR88_ION_MASS, charge=ELEMENTARY_CHARGE)

UNCORRELATED = "uncorrelated"
SYMMETRIC_IN_PHASE = "symmetric_in_phase"
WORST_CASE_COHERENT = "worst_case_coherent"


def dc_rate_coefficient(species: IonSpecies, omega: float, d: float) -> float:
    """quanta/s per V^2/Hz for noise on an electrode at distance ``d``."""
    if omega <= 0:
        raise ValueError("secular frequency must be positive")
    if d <= 0:
        raise ValueError("characteristic distance must be positive")
    if math.isinf(d):
        return 0.0
    q, m = species.charge, species.mass
    return q * q / (4.0 * m * HBAR * omega * d * d)


def heating_rate_dc(species: IonSpecies, omega: float, contributions) -> float:
    """Total rate from (S_V, D) pairs for the electrodes coupling to the mode."""
    rate = 0.0
    for s_v, d in contributions:
        if s_v < 0:
            raise ValueError("voltage PSD must be non-negative")
        rate += dc_rate_coefficient(species, omega, d) * s_v
    return rate


def rf_rate_coefficient(species: IonSpecies, omega: float, omega_rf: float,
                        v0: float) -> float:
    """quanta/s per (V^2/m^3)^2 per V^2/Hz for pseudopotential-gradient coupling."""
    if omega <= 0 or omega_rf <= 0 or v0 <= 0:
        raise ValueError("omega, Omega and V0 must be positive")
    q, m = species.charge, species.mass
    return q**4 / (16.0 * m**3 * HBAR * omega_rf**4 * omega * v0 * v0)


def heating_rate_rf(species: IonSpecies, omega: float, omega_rf: float,
                    v0: float, grad: float, s_v_rf: float,
                    single_sideband: bool = False) -> float:
    """Rate from RF-electrode noise of summed-sideband PSD ``s_v_rf``.

    ``grad`` is d(E0^2)/di along the mode axis.  If the supplied PSD covers
    only one sideband, set ``single_sideband``; consistent with equal noise
    at the two sidebands, it carries half the weight.
    """
    if s_v_rf < 0:
        raise ValueError("voltage PSD must be non-negative")
    weight = 0.5 if single_sideband else 1.0
    return rf_rate_coefficient(species, omega, omega_rf, v0) * grad * grad \
        * weight * s_v_rf


def intrinsic_contribution(fit_result, residual_psd: float,
                           residual_psd_sigma: float = 0.0,
                           monte_carlo: bool = False,
                           n_samples: int = 20000, seed: int = 0):
    """Heating-rate contribution of the residual noise, from a fitted slope.

    Evaluates slope * residual_psd (the fitted coupling with the background
    removed, taken at the measured residual PSD level).  Uncertainty is
    first-order by default; ``monte_carlo`` switches to sampling, which
    matters only for strongly asymmetric inputs.

    Returns (rate, sigma).
    """
    slope, slope_sigma = fit_result.slope, fit_result.slope_sigma
    if slope is None or not np.isfinite(slope):
        raise ValueError("fit result carries no converged slope")
    if residual_psd < 0:
        raise ValueError("residual PSD must be non-negative")
    rate = slope * residual_psd
    if monte_carlo:
        rng = np.random.default_rng(seed)
        slopes = rng.normal(slope, slope_sigma, n_samples)
        psds = rng.normal(residual_psd, residual_psd_sigma, n_samples)
        samples = slopes * np.clip(psds, 0.0, None)
        return rate, float(np.std(samples))
    sigma = math.hypot(slope_sigma * residual_psd, slope * residual_psd_sigma)
    return rate, sigma


def combine_groups(per_group_rate: float, n_groups: int, correlation: str) -> float:
    """Total rate from ``n_groups`` equivalent groups under a correlation model.

    Uncorrelated powers add (n x); fully correlated in-phase noise on a
    symmetric set cancels at the ion (0); worst-case coherent noise adds
    field amplitudes (n^2 x).
    """
    if per_group_rate < 0:
        raise ValueError("rate must be non-negative")
    if n_groups < 1:
        raise ValueError("need at least one group")
    if correlation == UNCORRELATED:
        return n_groups * per_group_rate
    if correlation == SYMMETRIC_IN_PHASE:
        return 0.0
    if correlation == WORST_CASE_COHERENT:
        return n_groups * n_groups * per_group_rate
    raise ValueError(f"unknown correlation model {correlation!r}")


@dataclass(frozen=True)
class HeatingBudgetEntry:
    """One row of a heating budget: a source and its rate with uncertainty."""

    source: str
    rate: float
    uncertainty: float = 0.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("budget rates must be non-negative")


def budget_total(entries, background: float = 0.0) -> float:
    """Modeled total rate: background plus the sum of all entries."""
    return background + sum(e.rate for e in entries)
