"""RF pseudopotential, trap operating points, and gradient minimization.

The static (pseudopotential) approximation is used throughout this module:
an ion of charge q and mass m in an RF field of amplitude E0(r) at drive
frequency Omega sees the effective potential energy

    U_p(r) = q^2 E0(r)^2 / (4 m Omega^2)

on top of the DC potential and any uniform stray field.  Full micromotion
dynamics live in the oracle module only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import fields
from .geometry import ElectrodeLayout


class TrapUnstableError(RuntimeError):
    """Operating point is not a potential minimum (Hessian not positive definite)."""


class NoMinimumError(RuntimeError):
    """No potential minimum found inside the search box."""


class ConvergenceError(RuntimeError):
    """An iterative minimization exceeded its iteration budget."""


@dataclass(frozen=True)
class TrapConfig:
    """Drive, DC and environment settings for one trap operating condition.

    ``rf_frequency`` is the angular drive frequency Omega in rad/s;
    ``rf_amplitude`` is the peak RF voltage V0.  ``dc_voltages`` maps
    electrode group names to volts; groups not listed are grounded.
    ``stray_field`` is a uniform field in V/m added to the electrode fields.
    """

    ion_mass: float
    ion_charge: float
    rf_frequency: float
    rf_amplitude: float
    dc_voltages: dict = field(default_factory=dict)
    stray_field: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("ion_mass", "ion_charge", "rf_frequency", "rf_amplitude"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "stray_field", tuple(float(v) for v in self.stray_field))
        if len(self.stray_field) != 3:
            raise ValueError("stray_field must be a 3-vector")

    def with_dc_offsets(self, offsets: dict) -> "TrapConfig":
        merged = dict(self.dc_voltages)
        for group, dv in offsets.items():
            merged[group] = merged.get(group, 0.0) + dv
        return replace(self, dc_voltages=merged)


@dataclass(frozen=True)
class TrapOperatingPoint:
    """Equilibrium position and local quadratic expansion of the trap.

    ``principal_axes[i]`` is the unit vector of mode i; modes are sorted by
    ascending secular frequency.  ``grad_e0_sq`` holds d(E0^2)/di along the
    principal axes, in V^2/m^3.
    """

    position: np.ndarray
    secular_frequencies: np.ndarray
    principal_axes: np.ndarray
    grad_e0_sq: np.ndarray
    e0_sq: float

    def axial_mode(self) -> int:
        """Index of the mode whose axis is closest to the lab y axis."""
        return int(np.argmax(np.abs(self.principal_axes[:, 1])))

    @property
    def axial_frequency(self) -> float:
        return float(self.secular_frequencies[self.axial_mode()])

    @property
    def axial_grad_e0_sq(self) -> float:
        return float(self.grad_e0_sq[self.axial_mode()])


# ---------------------------------------------------------------------------
# RF field and pseudopotential

def rf_field_amplitude(layout: ElectrodeLayout, config: TrapConfig, point):
    """Peak RF field vector E0 (V/m) at ``point``: V0 times the RF basis field."""
    return config.rf_amplitude * fields.basis_field(layout, layout.rf_group, point)


def e0_squared(layout: ElectrodeLayout, config: TrapConfig, point) -> float:
    e0 = rf_field_amplitude(layout, config, point)
    return float(np.dot(e0, e0))


def _rf_field_jacobian(layout, config, point, step=1e-9):
    """J[i, j] = dE0_i/dr_j by central differences of the closed-form field."""
    p = np.asarray(point, dtype=float)
    jac = np.zeros((3, 3))
    for j in range(3):
        d = np.zeros(3)
        d[j] = step
        jac[:, j] = (
            rf_field_amplitude(layout, config, p + d)
            - rf_field_amplitude(layout, config, p - d)
        ) / (2.0 * step)
    return jac


def grad_e0_squared(layout: ElectrodeLayout, config: TrapConfig, point, step=1e-9):
    """Gradient of E0^2 (V^2/m^3), computed as 2 J^T E0.

    This form vanishes cleanly at the RF null (where E0 = 0), unlike a
    direct finite difference of E0^2.
    """
    p = np.asarray(point, dtype=float)
    e0 = rf_field_amplitude(layout, config, p)
    jac = _rf_field_jacobian(layout, config, p, step)
    return 2.0 * jac.T @ e0


def dc_field(layout: ElectrodeLayout, config: TrapConfig, point):
    """Static field (V/m) from DC group voltages plus the stray field."""
    p = np.asarray(point, dtype=float)
    total = np.array(config.stray_field, dtype=float)
    for group, volt in config.dc_voltages.items():
        if volt != 0.0:
            total = total + volt * fields.basis_field(layout, group, p)
    return total


def total_potential_energy(layout, config, point) -> float:
    """Pseudopotential + DC + stray potential energy (J) at a single point."""
    p = np.asarray(point, dtype=float)
    q, m, omega_rf = config.ion_charge, config.ion_mass, config.rf_frequency
    u = q * q * e0_squared(layout, config, p) / (4.0 * m * omega_rf**2)
    for group, volt in config.dc_voltages.items():
        if volt != 0.0:
            u += q * volt * float(fields.basis_potential(layout, group, p))
    u -= q * float(np.dot(config.stray_field, p))
    return u


def potential_energy_gradient(layout, config, point):
    """Gradient (J/m) of the total potential energy."""
    p = np.asarray(point, dtype=float)
    q, m, omega_rf = config.ion_charge, config.ion_mass, config.rf_frequency
    g = q * q * grad_e0_squared(layout, config, p) / (4.0 * m * omega_rf**2)
    g = g - q * dc_field(layout, config, p)
    return g


def potential_hessian(layout, config, point, step=5e-9):
    """Hessian (J/m^2) by central differences of the analytic gradient."""
    p = np.asarray(point, dtype=float)
    hess = np.zeros((3, 3))
    for j in range(3):
        d = np.zeros(3)
        d[j] = step
        gp = potential_energy_gradient(layout, config, p + d)
        gm = potential_energy_gradient(layout, config, p - d)
        hess[:, j] = (gp - gm) / (2.0 * step)
    return 0.5 * (hess + hess.T)


# ---------------------------------------------------------------------------
# Operating point

def operating_point_at(layout, config, position) -> TrapOperatingPoint:
    """Quadratic expansion of the trap at a given position.

    Raises :class:`TrapUnstableError` if the Hessian is not positive
    definite there.
    """
    p = np.asarray(position, dtype=float)
    hess = potential_hessian(layout, config, p)
    evals, evecs = np.linalg.eigh(hess)
    if np.any(evals <= 0):
        raise TrapUnstableError(
            f"Hessian not positive definite at {p} (eigenvalues {evals})"
        )
    freqs = np.sqrt(evals / config.ion_mass)
    axes = evecs.T  # rows are principal axes, ascending frequency
    grad = grad_e0_squared(layout, config, p)
    return TrapOperatingPoint(
        position=p,
        secular_frequencies=freqs,
        principal_axes=axes,
        grad_e0_sq=axes @ grad,
        e0_sq=e0_squared(layout, config, p),
    )


def _search_box(layout, center=None, half_width=60e-6):
    if center is None:
        center = np.array([0.0, 0.0, layout.ion_height_hint])
    center = np.asarray(center, dtype=float)
    lo = center - half_width
    hi = center + half_width
    lo[2] = max(lo[2], 1e-7)  # stay above the electrode plane
    return lo, hi


def _polish_newton(layout, config, pos, lo, hi, n_polish):
    """Newton refinement toward a zero-gradient point, kept inside the box."""
    pos = np.asarray(pos, dtype=float).copy()
    for _ in range(n_polish):
        g = potential_energy_gradient(layout, config, pos)
        hess = potential_hessian(layout, config, pos)
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        step = np.clip(step, -5e-6, 5e-6)
        pos = np.clip(pos - step, lo, hi)
    return pos


def find_equilibrium(layout, config, center=None, half_width=60e-6,
                     grid=3, n_polish=6) -> TrapOperatingPoint:
    """Locate the trap minimum and characterize it.

    Multi-start quasi-Newton descent on a ``grid``^3 lattice inside a
    (+-half_width)^3 box around ``center`` (default: layout center at the
    ion height hint), followed by Newton polish.  Only interior converged
    points with a positive-definite Hessian count as candidates (descent
    can otherwise run off over the pseudopotential escape barrier); among
    candidates the lowest energy wins, with a position-lexicographic
    tie-break so the result does not depend on evaluation order.
    """
    lo, hi = _search_box(layout, center, half_width)
    if grid <= 1:
        axes_pts = [np.array([0.5 * (lo[i] + hi[i])]) for i in range(3)]
    else:
        axes_pts = [np.linspace(lo[i] + 0.05 * (hi[i] - lo[i]),
                                hi[i] - 0.05 * (hi[i] - lo[i]), grid)
                    for i in range(3)]
    xg, yg, zg = np.meshgrid(*axes_pts, indexing="ij")
    starts = np.column_stack([xg.ravel(), yg.ravel(), zg.ravel()])
    energies = np.array([total_potential_energy(layout, config, s) for s in starts])
    u_scale = float(np.max(energies) - np.min(energies))
    if u_scale <= 0:
        raise NoMinimumError("potential is flat over the search box")
    grad_tol = 1e-6 * u_scale / (hi[0] - lo[0])
    u_ref = float(np.min(energies))

    # normalize to O(1) so the optimizer's relative tolerances behave;
    # trap potential-energy scales (~1e-19 J) are otherwise far below them
    def objective(r):
        u = total_potential_energy(layout, config, r)
        g = potential_energy_gradient(layout, config, r)
        return (u - u_ref) / u_scale, g / u_scale

    edge = 1e-9
    best = None
    for start in starts:
        res = optimize.minimize(
            objective, start, jac=True, method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options=dict(maxiter=500, ftol=1e-14, gtol=1e-14),
        )
        cand = np.asarray(res.x)
        if np.any(cand < lo + edge) or np.any(cand > hi - edge):
            continue  # ran to the box boundary: not a trapped minimum
        cand = _polish_newton(layout, config, cand, lo, hi, n_polish)
        g = potential_energy_gradient(layout, config, cand)
        if np.linalg.norm(g) > grad_tol:
            continue
        hess = potential_hessian(layout, config, cand)
        if np.any(np.linalg.eigvalsh(hess) <= 0):
            continue  # saddle or maximum
        u = total_potential_energy(layout, config, cand)
        key = (u, tuple(cand))
        if best is None or key < best[0]:
            best = (key, cand)
    if best is None:
        raise NoMinimumError(
            "no interior potential minimum found in the search box"
        )
    return operating_point_at(layout, config, best[1])


# ---------------------------------------------------------------------------
# Axial-gradient structure and shim-based minimization

def pseudo_ridge_point(layout, config, y, x0=0.0, z0=None):
    """(x, z) minimizing E0^2 at fixed y: one point of the RF ridge line."""
    if z0 is None:
        z0 = layout.ion_height_hint

    def f(p):
        return e0_squared(layout, config, np.array([p[0], y, p[1]]))

    res = optimize.minimize(
        f, np.array([x0, z0]), method="Nelder-Mead",
        options=dict(xatol=1e-12, fatol=0.0, maxiter=2000),
    )
    return np.array([res.x[0], y, res.x[1]])


def find_rf_null(layout, config, y_span=(-60e-6, 110e-6), n_seeds: int = 7):
    """Point of (nearly) vanishing RF field amplitude: the global E0^2 minimum.

    Seeds a ridge search at several axial positions and polishes the best.
    """
    best = None
    for y0 in np.linspace(y_span[0], y_span[1], n_seeds):
        p = pseudo_ridge_point(layout, config, y0)

        def f(r):
            return e0_squared(layout, config, r) + (1e30 if r[2] <= 0 else 0.0)

        res = optimize.minimize(
            f, p, method="Nelder-Mead",
            options=dict(xatol=1e-13, fatol=0.0, maxiter=4000),
        )
        if best is None or res.fun < best.fun:
            best = res
    return np.asarray(best.x)


def enumerate_axial_gradient_zeros(layout, config, y_span, n=41):
    """All zeros of d(E0^2)/dy along the RF ridge within ``y_span``.

    The trap can have several such points near the null; they are all
    reported rather than collapsed into one.
    """
    y_lo, y_hi = y_span
    ys = np.linspace(y_lo, y_hi, n)
    pts = []
    x0, z0 = 0.0, layout.ion_height_hint
    for y in ys:
        p = pseudo_ridge_point(layout, config, y, x0, z0)
        x0, z0 = p[0], p[2]
        pts.append(p)
    grads = np.array([grad_e0_squared(layout, config, p)[1] for p in pts])
    zeros = []
    for i in range(len(ys) - 1):
        if grads[i] == 0.0:
            zeros.append(pts[i])
            continue
        if grads[i] * grads[i + 1] < 0:
            # refine the crossing along the ridge
            ya, yb = ys[i], ys[i + 1]
            for _ in range(40):
                ym = 0.5 * (ya + yb)
                pm = pseudo_ridge_point(layout, config, ym, pts[i][0], pts[i][2])
                gm = grad_e0_squared(layout, config, pm)[1]
                if gm == 0.0:
                    break
                if gm * grads[i] < 0:
                    yb = ym
                else:
                    ya = ym
            zeros.append(pm)
    return zeros


@dataclass(frozen=True)
class ShimParametrization:
    """Maps a small shim vector to DC voltage offsets.

    ``patterns[k]`` is a dict of group -> volts producing an approximately
    uniform field of 1 V/m along ``axes[k]`` at the reference point.
    """

    axes: tuple
    patterns: tuple

    def offsets(self, shims) -> dict:
        out: dict = {}
        for s, pattern in zip(shims, self.patterns):
            for group, volts in pattern.items():
                out[group] = out.get(group, 0.0) + s * volts
        return out


def build_shim_parametrization(layout, groups, point,
                               axes=("x", "y", "z")) -> ShimParametrization:
    """Least-squares voltage patterns for unit fields along ``axes`` at ``point``.

    ``groups`` are the DC groups available for shimming; at least three
    independent ones are needed to span all field directions.
    """
    p = np.asarray(point, dtype=float)
    basis = np.column_stack(
        [fields.basis_field(layout, g, p) for g in groups]
    )  # 3 x n_groups
    patterns = []
    for axis in axes:
        target = fields._axis_vector(axis)
        v, *_ = np.linalg.lstsq(basis, target, rcond=None)
        achieved = basis @ v
        if np.linalg.norm(achieved - target) > 0.05:
            raise ValueError(
                f"shim groups {groups} cannot produce a field along {axis!r}"
            )
        patterns.append(dict(zip(groups, v)))
    return ShimParametrization(axes=tuple(axes), patterns=tuple(patterns))


@dataclass(frozen=True)
class GradientMinimizationResult:
    shims: np.ndarray
    residual_grad: float
    initial_grad: float
    operating_point: TrapOperatingPoint
    config: TrapConfig
    n_evaluations: int


def minimize_gradient(layout, config, shim_parametrization,
                      max_evaluations=600) -> GradientMinimizationResult:
    """Find shim voltages nulling the axial pseudopotential gradient.

    The objective is |d(E0^2)/dy| at the shimmed equilibrium, which is what
    the experiment's probe tone at Omega + omega_y responds to.  The search
    starts from the uniform field that would push the equilibrium back to
    the RF null, then refines with a simplex; candidate equilibria are
    warm-started from the previous one for speed.
    """
    state = {"n": 0, "center": None, "grid": 3}

    def axial_grad(shims):
        if state["n"] >= max_evaluations:
            raise ConvergenceError(
                f"gradient minimization exceeded {max_evaluations} evaluations"
            )
        state["n"] += 1
        cfg = config.with_dc_offsets(shim_parametrization.offsets(shims))
        try:
            op = find_equilibrium(layout, cfg, center=state["center"],
                                  grid=state["grid"])
        except (NoMinimumError, TrapUnstableError):
            state["center"] = None
            state["grid"] = 3
            return None, None
        state["center"] = op.position
        state["grid"] = 1
        return abs(float(grad_e0_squared(layout, cfg, op.position)[1])), op

    n_shims = len(shim_parametrization.patterns)
    initial, op0 = axial_grad(np.zeros(n_shims))
    if op0 is None:
        raise NoMinimumError("trap has no equilibrium before shimming")

    # first guess: the uniform field holding the equilibrium at the null
    null = find_rf_null(layout, config)
    hess = potential_hessian(layout, config, op0.position)
    push = hess @ (null - op0.position) / config.ion_charge
    s0 = np.zeros(n_shims)
    for k, axis in enumerate(shim_parametrization.axes):
        s0[k] = float(np.dot(push, fields._axis_vector(axis)))

    # losing the trap must read as a bad-but-finite objective for the simplex
    def objective(shims):
        value, _ = axial_grad(shims)
        if value is None:
            return 1e3 * max(initial, 1.0) * (1.0 + float(np.sum(shims**2)))
        return value

    scale = max(10.0, 0.25 * float(np.max(np.abs(s0))))
    simplex = np.tile(s0, (n_shims + 1, 1))
    for i in range(n_shims):
        simplex[i + 1, i] += scale
    res = optimize.minimize(
        objective, s0, method="Nelder-Mead",
        options=dict(xatol=0.2, fatol=1e-3 * max(initial, 1.0),
                     maxfev=max_evaluations, initial_simplex=simplex),
    )
    shims = np.asarray(res.x)
    residual, op = axial_grad(shims)
    if op is None:
        raise ConvergenceError("shimmed trap lost its equilibrium")
    cfg = config.with_dc_offsets(shim_parametrization.offsets(shims))
    return GradientMinimizationResult(
        shims=shims,
        residual_grad=residual,
        initial_grad=initial,
        operating_point=op,
        config=cfg,
        n_evaluations=state["n"],
    )
