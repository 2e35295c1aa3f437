"""Stochastic ion-dynamics oracle: heating rates without the rate formulas.

Classical trajectories are integrated in the time-dependent trap with
synthesized voltage noise, and heating rates are read off the ensemble
energy growth.  Nothing here assumes the closed-form heating-rate
expressions, so agreement between this module and the heating module is a
genuine cross-check of both.

Two integration settings are used:

* the secular-frequency oracle reduces to a 1-D harmonic oscillator driven
  by field noise and advances it with an exact-rotation Strang splitting
  (kick / rotate / kick), which conserves energy to roundoff when the noise
  is off;

* the RF-noise oracle resolves the full drive on the trap's x=0 symmetry
  plane (2-D, exact closed-form RF field, harmonic DC background) with
  velocity Verlet at 64 steps per RF period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fields, trap
from .constants import HBAR
from .heating import IonSpecies


@dataclass(frozen=True)
class NoiseRealization:
    """Batch of synthesized noise time series with a known target PSD."""

    seed: int
    band_hz: tuple
    target_psd: float
    dt: float
    samples: np.ndarray  # (n_realizations, n_samples)


@dataclass(frozen=True)
class EnsembleResult:
    rate: float                # quanta/s
    statistical_sigma: float   # quanta/s
    n_realizations: int
    diagnostics: dict


def _rng(seed):
    # counter-based generator: realization streams are reproducible
    # regardless of how the work is scheduled
    return np.random.Generator(np.random.Philox(seed))


def synthesize_noise(seed, n_realizations, n_samples, dt, psd,
                     band_hz) -> NoiseRealization:
    """Gaussian time series with single-sided PSD ``psd`` inside ``band_hz``.

    Built from independent spectral amplitudes on the FFT grid, so the
    ensemble-averaged periodogram equals the target exactly in-band.
    """
    f_lo, f_hi = band_hz
    if f_lo < 0 or f_hi <= f_lo:
        raise ValueError("band must satisfy 0 <= f_lo < f_hi")
    n_bins = n_samples // 2 + 1
    df = 1.0 / (n_samples * dt)
    freqs = np.arange(n_bins) * df
    in_band = (freqs >= f_lo) & (freqs <= f_hi)
    in_band[0] = False
    if n_samples % 2 == 0:
        in_band[-1] = False
    rng = _rng(seed)
    sigma = math.sqrt(psd * df)
    spec = np.zeros((n_realizations, n_bins), dtype=complex)
    n_in = int(np.count_nonzero(in_band))
    if n_in:
        a = rng.normal(0.0, sigma, (n_realizations, n_in))
        b = rng.normal(0.0, sigma, (n_realizations, n_in))
        spec[:, in_band] = 0.5 * n_samples * (a - 1j * b)
    samples = np.fft.irfft(spec, n=n_samples, axis=-1)
    return NoiseRealization(seed=seed, band_hz=(f_lo, f_hi), target_psd=psd,
                            dt=dt, samples=samples)


def periodogram(samples, dt):
    """(frequencies, ensemble-mean single-sided periodogram) of a batch."""
    x = np.atleast_2d(samples)
    n = x.shape[-1]
    spec = np.fft.rfft(x, axis=-1)
    power = (2.0 * dt / n) * np.abs(spec) ** 2
    power[..., 0] /= 2.0
    if n % 2 == 0:
        power[..., -1] /= 2.0
    freqs = np.fft.rfftfreq(n, dt)
    return freqs, power.mean(axis=0)


def _rate_from_energy(times, energies, hbar_omega, discard_fraction=0.1):
    """Heating rate from per-realization linear fits of energy vs time.

    The first ``discard_fraction`` of the window is dropped as transient.
    Returns (rate, statistical sigma, linearity) with rate in quanta/s.
    """
    n_keep = energies.shape[-1]
    start = int(discard_fraction * n_keep)
    t = times[start:]
    e = energies[:, start:]
    tc = t - t.mean()
    denom = float(np.sum(tc * tc))
    slopes = (e @ tc) / denom
    rate = float(np.mean(slopes)) / hbar_omega
    sigma = float(np.std(slopes, ddof=1) / math.sqrt(len(slopes))) / hbar_omega \
        if len(slopes) > 1 else 0.0
    mean_trace = e.mean(axis=0)
    fitted = mean_trace.mean() + np.mean(slopes) * tc
    ss_res = float(np.sum((mean_trace - fitted) ** 2))
    ss_tot = float(np.sum((mean_trace - mean_trace.mean()) ** 2))
    linearity = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return rate, sigma, linearity


# ---------------------------------------------------------------------------
# Secular-frequency oracle (1-D harmonic reduction)

def simulate_secular_heating(species: IonSpecies, omega: float, s_e: float,
                             duration: float, n_realizations: int, seed: int,
                             band_hz=None, steps_per_period: int = 40,
                             initial_amplitude: float = 0.0) -> EnsembleResult:
    """Monte-Carlo heating rate of a harmonic mode driven by field noise.

    ``s_e`` is the single-sided electric-field PSD in (V/m)^2/Hz, flat over
    ``band_hz`` (default: a band centered on the secular frequency).  A band
    that excludes the secular frequency is allowed and simply yields no
    heating.  ``initial_amplitude`` sets a coherent starting displacement,
    used mainly to probe energy conservation of the integrator.
    """
    period = 2.0 * math.pi / omega
    if duration < 100.0 * period:
        raise ValueError("duration must cover at least 100 secular periods")
    if steps_per_period < 20:
        raise ValueError("need at least 20 integration steps per secular period")
    if s_e < 0:
        raise ValueError("field PSD must be non-negative")
    if band_hz is None:
        band_hz = (0.5 * omega / (2 * math.pi), 1.5 * omega / (2 * math.pi))

    dt = period / steps_per_period
    n_steps = int(round(duration / dt))
    q_over_m = species.charge / species.mass

    if s_e > 0:
        noise = synthesize_noise(seed, n_realizations, n_steps + 1, dt,
                                 s_e, band_hz)
        accel = q_over_m * noise.samples
    else:
        accel = np.zeros((n_realizations, n_steps + 1))

    x = np.full(n_realizations, float(initial_amplitude))
    v = np.zeros(n_realizations)
    cos_wdt, sin_wdt = math.cos(omega * dt), math.sin(omega * dt)

    sample_every = steps_per_period // 4
    n_samples = n_steps // sample_every + 1
    energies = np.empty((n_realizations, n_samples))
    times = np.empty(n_samples)
    half_dt = 0.5 * dt
    mass = species.mass
    k_spring = mass * omega * omega

    isample = 0
    for step in range(n_steps + 1):
        if step % sample_every == 0:
            energies[:, isample] = 0.5 * (mass * v * v + k_spring * x * x)
            times[isample] = step * dt
            isample += 1
        if step == n_steps:
            break
        # kick / exact rotation / kick
        v = v + half_dt * accel[:, step]
        x, v = (x * cos_wdt + (v / omega) * sin_wdt,
                v * cos_wdt - x * omega * sin_wdt)
        v = v + half_dt * accel[:, step + 1]

    rate, sigma, linearity = _rate_from_energy(times, energies, HBAR * omega)
    if s_e == 0 and energies[0, 0] > 0:
        drift = float(np.max(np.abs(energies - energies[:, :1])) / energies[0, 0])
    else:
        drift = float("nan")
    return EnsembleResult(
        rate=rate, statistical_sigma=sigma, n_realizations=n_realizations,
        diagnostics=dict(linearity=linearity, band_hz=band_hz, dt=dt,
                         relative_energy_drift=drift),
    )


# ---------------------------------------------------------------------------
# RF-resolved oracle on the x = 0 symmetry plane

class PlaneRFField:
    """Fast (E_y, E_z) evaluator for one group on the x = 0 plane.

    Valid only for layouts mirror-symmetric in x, where E_x vanishes on the
    plane and in-plane motion stays in-plane.  Corner geometry that does
    not depend on the evaluation point is precomputed.
    """

    def __init__(self, layout, group):
        extents = np.array([e.extent for e in layout.group_electrodes(group)])
        mirrored = extents.copy()
        mirrored[:, 0], mirrored[:, 1] = -extents[:, 1], -extents[:, 0]
        sym = sorted(map(tuple, extents)) == sorted(map(tuple, mirrored))
        if not sym:
            raise ValueError(f"group {group!r} is not mirror-symmetric in x")
        # u_i = x_i - 0 is a constant of the geometry
        self._u = extents[:, 0:2].reshape(1, -1, 2, 1)        # (1, R, 2, 1)
        self._y_edges = extents[:, 2:4].reshape(1, -1, 1, 2)  # (1, R, 1, 2)
        self._sign = np.array([[1.0, -1.0], [-1.0, 1.0]]).reshape(1, 1, 2, 2)

    def field_yz(self, y, z):
        y = np.asarray(y, dtype=float).reshape(-1, 1, 1, 1)
        z = np.asarray(z, dtype=float).reshape(-1, 1, 1, 1)
        u = self._u
        v = self._y_edges - y
        r = np.sqrt(u * u + v * v + z * z)
        uz = u * u + z * z
        vz = v * v + z * z
        e_y = np.sum(self._sign * (z * u) / (vz * r), axis=(1, 2, 3))
        e_z = np.sum(self._sign * (u * v) * (r * r + z * z) / (uz * vz * r),
                     axis=(1, 2, 3))
        return e_y / (2.0 * np.pi), e_z / (2.0 * np.pi)


def _held_point_setup(layout, config, displacement):
    """Static environment holding the secular equilibrium at null + displacement.

    Returns the held position, the uniform holding field, the DC force
    model (gradient of the static potential and its Hessian), and the local
    secular data.
    """
    d = np.asarray(displacement, dtype=float).copy()
    if d.shape != (3,) or abs(d[0]) > 1e-10:
        raise ValueError("displacement must be a 3-vector with zero x component")
    d[0] = 0.0
    null = trap.find_rf_null(layout, config)
    null[0] = 0.0
    r_d = null + d

    q = config.ion_charge
    m = config.ion_mass
    # pseudopotential force the RF drive will exert at the held point
    pseudo_grad = q * q * trap.grad_e0_squared(layout, config, r_d) / (
        4.0 * m * config.rf_frequency**2)
    dc_grad = -q * trap.dc_field(layout, config, r_d)
    e_hold = (pseudo_grad + dc_grad) / q

    # harmonic model of the DC-electrode potential about the held point
    h_step = 5e-9
    h_dc = np.zeros((3, 3))
    for j in range(3):
        dv = np.zeros(3)
        dv[j] = h_step
        gp = -q * trap.dc_field(layout, config, r_d + dv)
        gm = -q * trap.dc_field(layout, config, r_d - dv)
        h_dc[:, j] = (gp - gm) / (2.0 * h_step)
    h_dc = 0.5 * (h_dc + h_dc.T)

    op = trap.operating_point_at(layout, config, r_d)
    return r_d, null, e_hold, pseudo_grad, h_dc, op


def _integrate_rf_plane(layout, config, r_d, pseudo_grad, h_dc,
                        voltage, dt, n_steps, average_every):
    """Velocity-Verlet integration of (y, z) motion under the full RF drive.

    ``voltage`` has shape (n_realizations, n_steps + 1): total RF electrode
    voltage at each step time.  The static force is the holding force minus
    the harmonic DC restoring force; the RF force is exact.

    Returns block times and phase-space coordinates averaged over windows
    of ``average_every`` steps (one RF period, typically), which strips the
    micromotion and leaves the secular motion.
    """
    rf = PlaneRFField(layout, layout.rf_group)
    q = config.ion_charge
    m = config.ion_mass
    n_real = voltage.shape[0]

    y = np.full(n_real, r_d[1])
    z = np.full(n_real, r_d[2])
    vy = np.zeros(n_real)
    vz = np.zeros(n_real)

    # static force at displaced position delta: pseudo_grad - H_dc @ delta
    h_yy, h_yz, h_zz = h_dc[1, 1], h_dc[1, 2], h_dc[2, 2]
    f0_y, f0_z = pseudo_grad[1], pseudo_grad[2]

    def accel(y_, z_, volts):
        e_y, e_z = rf.field_yz(y_, z_)
        dy = y_ - r_d[1]
        dz = z_ - r_d[2]
        a_y = (q * volts * e_y + f0_y - (h_yy * dy + h_yz * dz)) / m
        a_z = (q * volts * e_z + f0_z - (h_yz * dy + h_zz * dz)) / m
        return a_y, a_z

    n_blocks = n_steps // average_every
    out = {k: np.zeros((n_real, n_blocks)) for k in ("y", "z", "vy", "vz")}
    times = (np.arange(n_blocks) + 0.5) * (average_every * dt)

    ay, az = accel(y, z, voltage[:, 0])
    half_dt = 0.5 * dt
    inv_avg = 1.0 / average_every
    for step in range(n_blocks * average_every):
        vy += half_dt * ay
        vz += half_dt * az
        y = y + dt * vy
        z = z + dt * vz
        ay, az = accel(y, z, voltage[:, step + 1])
        vy += half_dt * ay
        vz += half_dt * az
        block = step // average_every
        out["y"][:, block] += y * inv_avg
        out["z"][:, block] += z * inv_avg
        out["vy"][:, block] += vy * inv_avg
        out["vz"][:, block] += vz * inv_avg
        if step % 8192 == 0 and not np.all(np.isfinite(y)):
            raise trap.TrapUnstableError("trajectory diverged (unstable drive?)")
    if not all(np.all(np.isfinite(v)) for v in out.values()):
        raise trap.TrapUnstableError("trajectory diverged (unstable drive?)")
    return times, out


def simulate_rf_noise_heating(layout, config, displacement, s_v_per_sideband,
                              duration: float, n_realizations: int, seed: int,
                              sidebands=("upper", "lower"),
                              band_halfwidth_hz: float = 2.5e4,
                              steps_per_rf_period: int = 64) -> EnsembleResult:
    """Axial heating from voltage noise near Omega +- omega_ax on the RF drive.

    The ion is held at the RF null plus ``displacement`` by a uniform
    compensation field, and the full drive V0 cos(Omega t) + v_n(t) is
    integrated.  ``s_v_per_sideband`` is the flat single-sided PSD of v_n
    in each requested sideband band (centered on the axial secular
    sidebands of the drive).  The reported rate is the energy growth of the
    axial principal mode in quanta/s; no heating-rate formula enters.
    """
    if steps_per_rf_period < 50:
        raise ValueError("need at least 50 steps per RF period")
    if not sidebands or any(s not in ("upper", "lower") for s in sidebands):
        raise ValueError("sidebands must be a subset of ('upper', 'lower')")
    r_d, null, e_hold, pseudo_grad, h_dc, op = _held_point_setup(
        layout, config, displacement)
    axial = op.axial_mode()
    omega_ax = float(op.secular_frequencies[axial])
    axis = op.principal_axes[axial]
    grad_ax = float(op.grad_e0_sq[axial])

    omega_rf = config.rf_frequency
    dt = 2.0 * math.pi / omega_rf / steps_per_rf_period
    n_steps = int(round(duration / dt))

    # synthesized noise: one stream per sideband, summed onto the carrier
    f_rf = omega_rf / (2 * math.pi)
    f_ax = omega_ax / (2 * math.pi)
    volts = np.zeros((n_realizations, n_steps + 1))
    seeds = np.random.SeedSequence(seed).spawn(len(sidebands))
    for sb, ss in zip(sidebands, seeds):
        center = f_rf + f_ax if sb == "upper" else f_rf - f_ax
        band = (center - band_halfwidth_hz, center + band_halfwidth_hz)
        noise = synthesize_noise(ss, n_realizations, n_steps + 1, dt,
                                 s_v_per_sideband, band)
        volts += noise.samples
    t_grid = np.arange(n_steps + 1) * dt
    volts += config.rf_amplitude * np.cos(omega_rf * t_grid)

    # the DC force model is built about the held point; the holding force
    # enters through pseudo_grad (net static force at r_d cancels the
    # secular RF force there)
    times, sec = _integrate_rf_plane(
        layout, config, r_d, pseudo_grad, h_dc, volts, dt, n_steps,
        average_every=steps_per_rf_period)

    # energy of the axial principal mode from the secular coordinates
    u = axis[1] * (sec["y"] - r_d[1]) + axis[2] * (sec["z"] - r_d[2])
    w = axis[1] * sec["vy"] + axis[2] * sec["vz"]
    m = config.ion_mass
    energies = 0.5 * m * (w * w + omega_ax**2 * u * u)
    rate, sigma, linearity = _rate_from_energy(times, energies, HBAR * omega_ax)
    return EnsembleResult(
        rate=rate, statistical_sigma=sigma, n_realizations=n_realizations,
        diagnostics=dict(
            linearity=linearity, omega_axial=omega_ax, grad_axial=grad_ax,
            held_position=r_d, null=null, sidebands=tuple(sidebands),
            s_v_per_sideband=s_v_per_sideband, dt=dt,
        ),
    )


def simulate_drive_response(layout, config, drive_frequency: float,
                            drive_amplitude: float, duration: float,
                            displacement=(0.0, 0.0, 0.0),
                            steps_per_rf_period: int = 64):
    """Axial excitation amplitude under a coherent added tone on the RF drive.

    Returns the peak secular axial displacement over the last quarter of
    the run; with an uncompensated pseudopotential gradient the response
    peaks for tones at Omega + omega_ax.
    """
    r_d, null, e_hold, pseudo_grad, h_dc, op = _held_point_setup(
        layout, config, np.asarray(displacement, dtype=float))
    axial = op.axial_mode()
    axis = op.principal_axes[axial]

    omega_rf = config.rf_frequency
    dt = 2.0 * math.pi / omega_rf / steps_per_rf_period
    n_steps = int(round(duration / dt))
    t_grid = np.arange(n_steps + 1) * dt
    volts = (config.rf_amplitude * np.cos(omega_rf * t_grid)
             + drive_amplitude * np.cos(drive_frequency * t_grid))[None, :]

    times, sec = _integrate_rf_plane(
        layout, config, r_d, pseudo_grad, h_dc, volts, dt, n_steps,
        average_every=steps_per_rf_period)
    u = axis[1] * (sec["y"][0] - r_d[1]) + axis[2] * (sec["z"][0] - r_d[2])
    tail = u[(3 * u.size) // 4:]
    return float(np.max(np.abs(tail - tail.mean())))
