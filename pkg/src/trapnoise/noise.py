"""Single-sided noise spectra and circuit transfer chains.

Convention used everywhere in this package: power spectral densities are
single-sided and sampled on absolute frequency in Hz (V^2/Hz for voltage
spectra, W/Hz for power spectra).  Angular frequencies appear only inside
physics formulas and are converted at the interfaces.  Getting this wrong
is the classic factor-of-two failure mode of noise budgets, so the
convention is enforced here and nowhere re-decided.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

import numpy as np

from .constants import BOLTZMANN

VOLTAGE = "voltage"  # V^2/Hz
POWER = "power"      # W/Hz


class ChainError(ValueError):
    """A transfer stage is incompatible with the spectrum kind it is fed."""


@dataclass(frozen=True)
class NoiseSpectrum:
    """Sampled single-sided PSD with log-log linear interpolation."""

    frequencies_hz: np.ndarray
    psd: np.ndarray
    kind: str = VOLTAGE

    def __post_init__(self):
        f = np.asarray(self.frequencies_hz, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        if f.ndim != 1 or f.shape != p.shape or f.size == 0:
            raise ValueError("frequencies and psd must be equal-length 1-D arrays")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(f <= 0):
            raise ValueError("frequencies must be positive")
        if np.any(p < 0):
            raise ValueError("PSD values must be non-negative")
        if self.kind not in (VOLTAGE, POWER):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "psd", p)

    def psd_at(self, f_hz):
        """Interpolate the PSD (log-log linear, clamped outside the span)."""
        f = np.atleast_1d(np.asarray(f_hz, dtype=float))
        if np.any(f <= 0):
            raise ValueError("query frequencies must be positive")
        # zeros cannot be represented in log space; floor them and restore
        tiny = np.finfo(float).tiny
        logp = np.log(np.maximum(self.psd, tiny))
        out = np.exp(np.interp(np.log(f), np.log(self.frequencies_hz), logp))
        out[out <= tiny] = 0.0
        # exact reproduction of sample points
        idx = np.searchsorted(self.frequencies_hz, f)
        for which in (idx.clip(0, self.psd.size - 1),
                      (idx - 1).clip(0, self.psd.size - 1)):
            hit = f == self.frequencies_hz[which]
            out[hit] = self.psd[which[hit]]
        return out if np.ndim(f_hz) else float(out[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["frequency_hz", "psd", "kind"])
        for f, p in zip(self.frequencies_hz, self.psd):
            writer.writerow([repr(f), repr(p), self.kind])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "NoiseSpectrum":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty spectrum CSV")
        kinds = {r["kind"] for r in rows}
        if len(kinds) != 1:
            raise ValueError("spectrum CSV mixes kinds")
        return cls(
            frequencies_hz=np.array([float(r["frequency_hz"]) for r in rows]),
            psd=np.array([float(r["psd"]) for r in rows]),
            kind=kinds.pop(),
        )

    @classmethod
    def flat(cls, psd, f_lo=1.0, f_hi=1e9, kind=VOLTAGE, n=2):
        return cls(np.geomspace(f_lo, f_hi, n), np.full(n, float(psd)), kind)


# ---------------------------------------------------------------------------
# Transfer stages

@dataclass(frozen=True)
class RCLowPass:
    """First-order RC low-pass; cutoff 1/(2 pi R C)."""

    r: float
    c: float

    @property
    def cutoff_hz(self) -> float:
        return 1.0 / (2.0 * np.pi * self.r * self.c)

    def power_response(self, f_hz):
        return 1.0 / (1.0 + (np.asarray(f_hz) / self.cutoff_hz) ** 2)


@dataclass(frozen=True)
class FirstOrderResponse:
    """First-order low-pass specified directly by its cutoff frequency."""

    cutoff_hz: float

    def power_response(self, f_hz):
        return 1.0 / (1.0 + (np.asarray(f_hz) / self.cutoff_hz) ** 2)


@dataclass(frozen=True)
class Bandpass:
    """Idealized tunable bandpass: unity at the carrier, notched sidebands.

    Only the notch behavior matters for sideband-noise budgets, so the
    response is 1 everywhere except within ``notch_width_hz`` windows
    centered on ``notch_freqs_hz``, where the power is suppressed by
    ``suppression_db``.
    """

    center_hz: float
    notch_freqs_hz: tuple
    notch_width_hz: float
    suppression_db: float

    def power_response(self, f_hz):
        f = np.asarray(f_hz, dtype=float)
        resp = np.ones_like(f)
        for notch in self.notch_freqs_hz:
            inside = np.abs(f - notch) <= 0.5 * self.notch_width_hz
            resp = np.where(inside, 10.0 ** (-self.suppression_db / 10.0), resp)
        return resp


@dataclass(frozen=True)
class FlatGain:
    """Frequency-independent gain/attenuation in power dB."""

    db: float

    def power_response(self, f_hz):
        return np.full_like(np.asarray(f_hz, dtype=float), 10.0 ** (self.db / 10.0))


@dataclass(frozen=True)
class ResonatorParams:
    """Helical-resonator response parameters (quality factor, inductance, drive)."""

    q: float
    l: float
    omega: float  # rad/s

    def __post_init__(self):
        if self.q <= 0 or self.l <= 0 or self.omega <= 0:
            raise ValueError("resonator Q, L and drive frequency must be positive")

    def transfer_ohms(self, detuning_rad_s):
        """Power-to-voltage transfer Q L Omega / (1 + 4 Q^2 w^2 / Omega^2)."""
        w = np.asarray(detuning_rad_s, dtype=float)
        return self.q * self.l * self.omega / (
            1.0 + 4.0 * self.q**2 * w**2 / self.omega**2
        )


@dataclass(frozen=True)
class ResonatorStage:
    """Chain stage applying the resonator transfer to a power spectrum.

    Converts W/Hz into V^2/Hz; the Lorentzian argument is the detuning of
    the sample frequency from the carrier.
    """

    params: ResonatorParams

    def power_response(self, f_hz):
        detuning = 2.0 * np.pi * np.asarray(f_hz, dtype=float) - self.params.omega
        return self.params.transfer_ohms(detuning)


@dataclass(frozen=True)
class TransferChain:
    """Ordered list of stages applied multiplicatively to a PSD."""

    stages: tuple

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def output_kind(self, input_kind: str) -> str:
        kind = input_kind
        for stage in self.stages:
            if isinstance(stage, ResonatorStage):
                if kind != POWER:
                    raise ChainError(
                        "resonator stage requires a power spectrum input"
                    )
                kind = VOLTAGE
        return kind

    def power_response(self, f_hz):
        f = np.asarray(f_hz, dtype=float)
        resp = np.ones_like(f)
        for stage in self.stages:
            resp = resp * stage.power_response(f)
        return resp


def apply_chain(chain: TransferChain, spectrum: NoiseSpectrum) -> NoiseSpectrum:
    """Propagate a spectrum through a chain (pointwise power response)."""
    kind = chain.output_kind(spectrum.kind)
    psd = spectrum.psd * chain.power_response(spectrum.frequencies_hz)
    return NoiseSpectrum(spectrum.frequencies_hz, psd, kind)


# ---------------------------------------------------------------------------
# Closed-form noise results

def resonator_voltage_noise(params: ResonatorParams, s_p: float, omega: float,
                            both_sidebands: bool = False) -> float:
    """Voltage PSD on the RF electrode from power noise at one sideband.

    ``s_p`` is the measured power PSD (W/Hz) at detuning ``omega`` (rad/s)
    from the carrier.  With ``both_sidebands`` the result is doubled,
    reflecting equal measured noise at the upper and lower sidebands.
    """
    if omega < 0:
        raise ValueError("detuning must be non-negative")
    if s_p < 0:
        raise ValueError("power PSD must be non-negative")
    s_v = float(params.transfer_ohms(omega)) * s_p
    return 2.0 * s_v if both_sidebands else s_v


def johnson_noise(resistance: float, temperature: float) -> float:
    """Thermal voltage noise 4 k_B T R in V^2/Hz."""
    if resistance < 0 or temperature < 0:
        raise ValueError("resistance and temperature must be non-negative")
    return 4.0 * BOLTZMANN * temperature * resistance


# ---------------------------------------------------------------------------
# Stage-spec parsing for config files

_STAGE_RE = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*$")


def _parse_kwargs(arg_text):
    kwargs = {}
    for piece in arg_text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        key, _, value = piece.partition("=")
        kwargs[key.strip()] = value.strip()
    return kwargs


def parse_stage(text: str):
    """Parse one stage spec like ``rc_lowpass(r=500, c=1.27e-7)``."""
    match = _STAGE_RE.match(text)
    if not match:
        raise ValueError(f"malformed stage spec {text!r}")
    name, kwargs = match.group(1), _parse_kwargs(match.group(2))
    try:
        if name == "rc_lowpass":
            return RCLowPass(r=float(kwargs["r"]), c=float(kwargs["c"]))
        if name == "first_order_response":
            return FirstOrderResponse(cutoff_hz=float(kwargs["cutoff_hz"]))
        if name == "flat_gain":
            return FlatGain(db=float(kwargs["db"]))
        if name == "bandpass":
            notches = tuple(
                float(v) for v in kwargs["notch_freqs_hz"].split("|")
            )
            return Bandpass(
                center_hz=float(kwargs["center_hz"]),
                notch_freqs_hz=notches,
                notch_width_hz=float(kwargs["notch_width_hz"]),
                suppression_db=float(kwargs["suppression_db"]),
            )
        if name == "resonator":
            return ResonatorStage(ResonatorParams(
                q=float(kwargs["q"]), l=float(kwargs["l"]),
                omega=2.0 * np.pi * float(kwargs["frequency_hz"]),
            ))
    except KeyError as err:
        raise ValueError(f"stage {name!r} missing argument {err}") from err
    raise ValueError(f"unknown stage kind {name!r}")


def parse_chain(text: str) -> TransferChain:
    """Parse a semicolon-separated ordered stage list."""
    stages = [parse_stage(part) for part in text.split(";") if part.strip()]
    return TransferChain(stages=tuple(stages))
