"""Weighted linear fits of heating rate versus electrode noise PSD.

Both rate models are linear in the PSD,

    rate = background + k * S,

so the engine is exact weighted linear regression with analytic covariance;
no iterative nonlinear minimizer is involved.  PSD (x) uncertainties are
folded in by the effective-variance method: fit once with rate errors only,
then refit with sigma_eff^2 = sigma_rate^2 + (k * sigma_S)^2.

The physical parameter hides in the slope: for the DC model
k = q^2/(4 m hbar omega D^2) so D = sqrt(coeff/k); for the RF model
k = C * grad^2 with C the pseudopotential coupling coefficient, so
grad = sqrt(k/C).  Either way sigma_param/param = sigma_k/(2 k).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import heating
from .constants import HBAR
from .heating import IonSpecies

DC = "dc"
RF = "rf"


class FitError(ValueError):
    """The dataset cannot be fit (too few points, singular design, ...)."""


@dataclass(frozen=True)
class FitContext:
    """Physical context needed to convert a fitted slope into D or grad."""

    species: IonSpecies
    omega: float                 # secular frequency, rad/s
    omega_rf: float | None = None  # RF drive, rad/s (RF regime only)
    v0: float | None = None        # RF amplitude, V (RF regime only)


@dataclass(frozen=True)
class HeatingDataset:
    """Measured (PSD, rate) points with uncertainties for one regime."""

    s: np.ndarray
    s_sigma: np.ndarray
    rate: np.ndarray
    rate_sigma: np.ndarray
    regime: str
    context: FitContext

    def __post_init__(self):
        for name in ("s", "s_sigma", "rate", "rate_sigma"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.s.size
        if any(getattr(self, name).size != n for name in ("s_sigma", "rate", "rate_sigma")):
            raise FitError("dataset columns differ in length")
        if np.any(self.s < 0) or np.any(self.rate < 0):
            raise FitError("PSDs and rates must be non-negative")
        if np.any(self.rate_sigma <= 0):
            raise FitError("rate uncertainties must be positive for fitted points")
        if np.any(self.s_sigma < 0):
            raise FitError("PSD uncertainties must be non-negative")
        if self.regime not in (DC, RF):
            raise FitError(f"unknown regime {self.regime!r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["s_v2_per_hz", "s_sigma", "rate_quanta_per_s",
                         "rate_sigma", "regime"])
        for row in zip(self.s, self.s_sigma, self.rate, self.rate_sigma):
            writer.writerow([repr(v) for v in row] + [self.regime])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, context: FitContext) -> "HeatingDataset":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise FitError("empty dataset CSV")
        regimes = {r["regime"] for r in rows}
        if len(regimes) != 1:
            raise FitError("dataset CSV mixes regimes")
        return cls(
            s=np.array([float(r["s_v2_per_hz"]) for r in rows]),
            s_sigma=np.array([float(r["s_sigma"]) for r in rows]),
            rate=np.array([float(r["rate_quanta_per_s"]) for r in rows]),
            rate_sigma=np.array([float(r["rate_sigma"]) for r in rows]),
            regime=regimes.pop(),
            context=context,
        )


@dataclass(frozen=True)
class FitResult:
    background: float
    background_sigma: float
    slope: float
    slope_sigma: float
    covariance: np.ndarray
    chi2_per_dof: float
    derived_name: str            # "D" (m) or "grad" (V^2/m^3)
    derived_value: float | None
    derived_sigma: float | None
    background_clamped: bool = False
    no_coupling: bool = False


def _weighted_line(x, y, sigma):
    w = 1.0 / sigma**2
    design = np.column_stack([np.ones_like(x), x])
    normal = design.T @ (design * w[:, None])
    rhs = design.T @ (y * w)
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as err:
        raise FitError("singular design matrix (all PSD values equal?)") from err
    params = cov @ rhs
    resid = y - design @ params
    chi2 = float(np.sum(w * resid**2))
    return params, cov, chi2


def _fit_linear(dataset: HeatingDataset):
    x, y = dataset.s, dataset.rate
    if x.size < 3:
        raise FitError("need at least 3 points to fit")
    if np.ptp(x) == 0:
        raise FitError("singular design matrix (all PSD values equal)")
    sigma = dataset.rate_sigma.copy()
    params = cov = chi2 = None
    # two-pass effective variance folds PSD calibration error into the weights
    for _ in range(2):
        params, cov, chi2 = _weighted_line(x, y, sigma)
        sigma = np.sqrt(dataset.rate_sigma**2 + (params[1] * dataset.s_sigma) ** 2)
    dof = max(x.size - 2, 1)
    background, slope = float(params[0]), float(params[1])
    clamped = False
    if background < 0:
        # rates cannot be negative; pin the background and keep the
        # unconstrained covariance for reporting
        background = 0.0
        clamped = True
        w = 1.0 / sigma**2
        slope = float(np.sum(w * x * y) / np.sum(w * x * x))
    return background, slope, cov, chi2 / dof, clamped


def _finish(dataset, derived_name, slope_to_param):
    background, slope, cov, chi2_dof, clamped = _fit_linear(dataset)
    background_sigma = float(np.sqrt(cov[0, 0]))
    slope_sigma = float(np.sqrt(cov[1, 1]))
    if slope <= 0:
        return FitResult(
            background=background, background_sigma=background_sigma,
            slope=slope, slope_sigma=slope_sigma, covariance=cov,
            chi2_per_dof=chi2_dof, derived_name=derived_name,
            derived_value=None, derived_sigma=None,
            background_clamped=clamped, no_coupling=True,
        )
    value = slope_to_param(slope)
    sigma = value * slope_sigma / (2.0 * slope)
    return FitResult(
        background=background, background_sigma=background_sigma,
        slope=slope, slope_sigma=slope_sigma, covariance=cov,
        chi2_per_dof=chi2_dof, derived_name=derived_name,
        derived_value=value, derived_sigma=sigma,
        background_clamped=clamped,
    )


def fit_dc(dataset: HeatingDataset) -> FitResult:
    """Fit rate = background + k S on a DC-noise dataset; derive D from k."""
    if dataset.regime != DC:
        raise FitError("fit_dc requires a dc-regime dataset")
    ctx = dataset.context
    coeff = ctx.species.charge ** 2 / (4.0 * ctx.species.mass * HBAR * ctx.omega)

    def to_d(slope):
        return math.sqrt(coeff / slope)

    return _finish(dataset, "D", to_d)


def fit_rf(dataset: HeatingDataset) -> FitResult:
    """Fit rate = background + k S_V,RF on an RF dataset; derive grad from k."""
    if dataset.regime != RF:
        raise FitError("fit_rf requires an rf-regime dataset")
    ctx = dataset.context
    if ctx.omega_rf is None or ctx.v0 is None:
        raise FitError("RF fits need Omega and V0 in the dataset context")
    coeff = heating.rf_rate_coefficient(ctx.species, ctx.omega, ctx.omega_rf, ctx.v0)

    def to_grad(slope):
        return math.sqrt(slope / coeff)

    return _finish(dataset, "grad", to_grad)
