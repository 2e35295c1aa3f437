"""Synthetic noise-injection experiments and the thermometry observable.

Emulates the measurement campaign: for each injected noise level the true
heating rate follows the linear rate model, nbar(t) is sampled at a few
delay times through a shot-noise-limited red/blue sideband measurement, and
the rate is re-estimated by a linear fit of nbar versus delay.  Used to
validate the fit engine (parameter recovery, coverage) and to produce
plot-ready CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import heating
from .fit import DC, RF, FitContext, HeatingDataset


def sideband_nbar(red_amplitude: float, blue_amplitude: float) -> float:
    """Mean occupation from the red/blue sideband amplitude ratio.

    For a thermal state the ratio R = red/blue equals nbar/(nbar+1), so
    nbar = R/(1-R).  R -> 1 means an unresolvably hot ion (returns inf).
    """
    if blue_amplitude <= 0:
        raise ValueError("blue sideband amplitude must be positive")
    if red_amplitude < 0:
        raise ValueError("sideband amplitudes must be non-negative")
    if red_amplitude > blue_amplitude:
        raise ValueError("red sideband exceeds blue: unphysical thermal state")
    ratio = red_amplitude / blue_amplitude
    if ratio == 1.0:
        return math.inf
    return ratio / (1.0 - ratio)


def nbar_to_ratio(nbar: float) -> float:
    """Inverse of :func:`sideband_nbar`: R = nbar/(1+nbar)."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    return nbar / (1.0 + nbar)


@dataclass(frozen=True)
class MeasurementModel:
    """Shot statistics of one heating-rate measurement.

    Delay times are rescaled per point so the ion heats by about
    ``nbar_span`` quanta over the longest delay, as in practice: the
    sideband ratio saturates for a hot ion, so hot points use short waits.
    """

    n_shots: int = 500
    delays_s: tuple = (0.0, 0.1, 0.2, 0.3)
    blue_amplitude: float = 0.6   # bare blue-sideband excitation probability
    initial_nbar: float = 0.05
    psd_sigma_frac: float = 0.05  # calibration error on the PSD axis
    nbar_span: float = 2.0

    def __post_init__(self):
        if self.n_shots < 1:
            raise ValueError("n_shots must be at least 1")
        if len(self.delays_s) < 2:
            raise ValueError("need at least two delay times")

    def scaled_delays(self, expected_rate: float) -> np.ndarray:
        delays = np.asarray(self.delays_s, dtype=float)
        t_max = float(delays.max())
        if expected_rate * t_max > self.nbar_span:
            delays = delays * (self.nbar_span / (expected_rate * t_max))
        return delays


@dataclass(frozen=True)
class ExperimentPlan:
    """Truth parameters plus the sweep and measurement settings."""

    regime: str
    injected_psd_levels: tuple      # V^2/Hz, sorted ascending
    residual_psd: float             # V^2/Hz present with no injection
    background_rate: float          # quanta/s
    context: FitContext
    d: float | None = None          # m, DC regime truth
    grad: float | None = None       # V^2/m^3, RF regime truth
    measurement: MeasurementModel = field(default_factory=MeasurementModel)

    def __post_init__(self):
        levels = tuple(float(v) for v in self.injected_psd_levels)
        if any(b < a for a, b in zip(levels, levels[1:])):
            raise ValueError("injected PSD levels must be sorted ascending")
        object.__setattr__(self, "injected_psd_levels", levels)
        if self.regime == DC and (self.d is None or self.d <= 0):
            raise ValueError("DC plan needs a positive characteristic distance")
        if self.regime == RF and (self.grad is None or self.grad < 0):
            raise ValueError("RF plan needs a non-negative gradient")

    def slope(self) -> float:
        """quanta/s per V^2/Hz of total electrode noise, from the truth."""
        ctx = self.context
        if self.regime == DC:
            return heating.dc_rate_coefficient(ctx.species, ctx.omega, self.d)
        return heating.rf_rate_coefficient(
            ctx.species, ctx.omega, ctx.omega_rf, ctx.v0) * self.grad**2

    def true_rate(self, injected_psd: float) -> float:
        return self.background_rate + self.slope() * (self.residual_psd + injected_psd)


def _measure_rate(true_rate, model: MeasurementModel, rng):
    """One simulated rate measurement: nbar(t) via binomial sideband shots."""
    delays = model.scaled_delays(true_rate)
    nbar_true = model.initial_nbar + true_rate * delays
    ratio = nbar_true / (1.0 + nbar_true)
    n = model.n_shots
    blue_p = model.blue_amplitude
    blue_est = rng.binomial(n, np.full_like(ratio, blue_p)) / n
    red_est = rng.binomial(n, np.clip(ratio * blue_p, 0.0, 1.0)) / n
    blue_est = np.clip(blue_est, 1.0 / n, None)
    r_est = np.clip(red_est / blue_est, 0.0, 1.0 - 1e-9)
    nbar_est = r_est / (1.0 - r_est)

    # shot-noise sigma of nbar, propagated from the binomial variances
    var_red = ratio * blue_p * (1.0 - ratio * blue_p) / n
    var_blue = blue_p * (1.0 - blue_p) / n
    var_r = (var_red + r_est**2 * var_blue) / blue_p**2
    sigma_nbar = np.sqrt(var_r) / (1.0 - r_est) ** 2

    # unweighted linear fit of nbar(t); uncertainty from per-point shot noise
    t = delays - delays.mean()
    denom = float(np.sum(t * t))
    rate_est = float(np.sum(t * nbar_est) / denom)
    rate_sigma = float(np.sqrt(np.sum((t * sigma_nbar) ** 2)) / denom)
    return rate_est, max(rate_sigma, 1e-12)


def generate_dataset(plan: ExperimentPlan, seed: int) -> HeatingDataset:
    """Simulate the full sweep; deterministic for a fixed seed.

    Levels use independently derived per-level RNG streams, so parallel
    generation across levels would give identical output.
    """
    root = np.random.SeedSequence(seed)
    streams = root.spawn(len(plan.injected_psd_levels))
    s, s_sigma, rate, rate_sigma = [], [], [], []
    for level, stream in zip(plan.injected_psd_levels, streams):
        rng = np.random.default_rng(stream)
        total_psd = plan.residual_psd + level
        r, r_sig = _measure_rate(plan.true_rate(level), plan.measurement, rng)
        s.append(total_psd)
        s_sigma.append(plan.measurement.psd_sigma_frac * total_psd)
        rate.append(max(r, 0.0))
        rate_sigma.append(r_sig)
    return HeatingDataset(
        s=np.array(s), s_sigma=np.array(s_sigma),
        rate=np.array(rate), rate_sigma=np.array(rate_sigma),
        regime=plan.regime, context=plan.context,
    )


def truth_sidecar(plan: ExperimentPlan) -> str:
    """Plain-text record of the truth parameters behind a synthetic dataset."""
    lines = [
        "# synthetic-dataset truth",
        f"regime = {plan.regime}",
        f"background_rate = {plan.background_rate!r}",
        f"residual_psd = {plan.residual_psd!r}",
        f"slope = {plan.slope()!r}",
    ]
    if plan.regime == DC:
        lines.append(f"d = {plan.d!r}")
    else:
        lines.append(f"grad = {plan.grad!r}")
    return "\n".join(lines) + "\n"
