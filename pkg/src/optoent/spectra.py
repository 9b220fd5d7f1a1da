"""Classical and vacuum input noise spectra, plus fitting to tabulated budgets.

Every spectrum here is one-sided and symmetrized: a process ``n(t)`` with
spectrum ``S`` has ``<{n(t), n(t')}>/2 = (1/2) int dW/2pi S(W) exp(-iW(t-t'))``.
With that convention the vacuum quadratures ``u1, u2`` have ``S = 1``.

Force spectra are in N^2/Hz, sensing spectra in m^2/Hz. All evaluations are
even in frequency.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .model import HBAR, TWO_PI

logger = logging.getLogger(__name__)

__all__ = [
    "SpectrumError",
    "ExtrapolationError",
    "FitError",
    "ResonantMode",
    "Quiet",
    "White",
    "Structural",
    "LigoParam",
    "SuspensionOnly",
    "PowerTable",
    "Tabulated",
    "NoiseModel",
    "ALIGO_RESONANCES",
    "loss_angle",
    "force_spectrum",
    "sensing_spectrum",
    "vacuum_input_spectrum",
    "lorentzian_factor",
    "FitResult",
    "fit_noise_model",
    "read_psd_csv",
    "model_to_json",
]

class SpectrumError(ValueError):
    """Invalid noise-model parameters."""


class ExtrapolationError(SpectrumError):
    """Tabulated spectrum queried outside its band without a tail rule."""


class FitError(RuntimeError):
    """Least-squares fit failed; ``best`` holds the best parameters reached."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def _positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not np.isfinite(value) or value <= 0:
            raise SpectrumError(f"{type(obj).__name__}.{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class ResonantMode:
    """Lorentzian resonance multiplying the force spectrum.

    ``center`` and ``fwhm`` in rad/s, ``amplitude`` in rad/s.
    """

    center: float
    fwhm: float
    amplitude: float

    def __post_init__(self):
        _positive(self, "center", "fwhm", "amplitude")


ALIGO_RESONANCES: Tuple[ResonantMode, ...] = tuple(
    ResonantMode(TWO_PI * f, TWO_PI * w, a)
    for f, w, a in [
        (0.441, 1.92e-3, 159.0),
        (0.995, 5.63e-5, 93.8),
        (1.98, 2.11e-5, 538.0),
        (2.37, 1.44e-1, 235.0),
        (3.38, 1.45e-4, 353.0),
        (3.81, 1.65e-3, 27.4),
        (9.73, 1.03e-3, 78.0),
    ]
)


@dataclass(frozen=True)
class Quiet:
    """No classical noise at all."""

    family = "quiet"


@dataclass(frozen=True)
class White:
    """Markovian force and sensing noise crossing the free-mass SQL of a
    mirror of ``mass`` at ``omega_f`` and ``omega_x`` respectively."""

    omega_f: float
    omega_x: float
    mass: float
    family = "white"

    def __post_init__(self):
        _positive(self, "omega_f", "omega_x", "mass")


@dataclass(frozen=True)
class Structural:
    """Internal-friction noise, ``1/|W|`` above the cutoff ``omega_c``.

    ``loss`` is the high-frequency loss angle entering the complex spring.
    The mechanics then has no velocity damping beyond the optional
    ``viscous_damping`` (rad/s), which replaces ``SystemParams.mech_damping``.
    """

    omega_f: float
    omega_x: float
    loss: float
    omega_c: float
    mass: float
    viscous_damping: float = 0.0
    family = "structural"

    def __post_init__(self):
        _positive(self, "omega_f", "omega_x", "omega_c", "mass")
        if not np.isfinite(self.loss) or self.loss < 0:
            raise SpectrumError(f"loss angle must be non-negative, got {self.loss!r}")
        if not np.isfinite(self.viscous_damping) or self.viscous_damping < 0:
            raise SpectrumError("viscous_damping must be non-negative")


@dataclass(frozen=True)
class LigoParam:
    """Rational-function model of the aLIGO force and sensing budgets.

    The ``alpha_*`` knobs rescale the nominal fit; with all of them equal to
    one and no resonances this is the baseline aLIGO model. Resonances are
    not moved by ``alpha_f2``.
    """

    tau_f: float = 1.6e-20
    omega_f: float = TWO_PI * 0.25
    tau_x1: float = 1e-50
    tau_x2: float = 1e-48
    omega_x: float = TWO_PI * 1e4
    alpha_f1: float = 1.0
    alpha_f2: float = 1.0
    alpha_x1: float = 1.0
    alpha_x2: float = 1.0
    resonances: Tuple[ResonantMode, ...] = ()
    family = "ligo"

    def __post_init__(self):
        _positive(self, "tau_f", "omega_f", "tau_x1", "tau_x2", "omega_x",
                  "alpha_f1", "alpha_f2", "alpha_x1", "alpha_x2")
        object.__setattr__(self, "resonances", tuple(self.resonances))

    @classmethod
    def aligo(cls, resonances=False, **knobs):
        return cls(resonances=ALIGO_RESONANCES if resonances else (), **knobs)


@dataclass(frozen=True)
class SuspensionOnly:
    """aLIGO without seismic noise: suspension thermal force noise only.

    The sensing side keeps the aLIGO coating-noise model.
    """

    tau_st: float = 3.1e-35
    omega_st: float = TWO_PI * 1.9e3
    tau_x1: float = 1e-50
    tau_x2: float = 1e-48
    omega_x: float = TWO_PI * 1e4
    alpha_x1: float = 1.0
    alpha_x2: float = 1.0
    family = "suspension"

    def __post_init__(self):
        _positive(self, "tau_st", "omega_st", "tau_x1", "tau_x2", "omega_x",
                  "alpha_x1", "alpha_x2")


@dataclass(frozen=True)
class PowerTable:
    """Sampled one-sided PSD with log-log linear interpolation.

    ``frequency`` in Hz, strictly increasing. Outside the sampled band a
    power-law tail ``psd ~ f**exponent`` continues from the end sample, but
    only if the exponent is configured.
    """

    frequency: Tuple[float, ...]
    psd: Tuple[float, ...]
    low_tail: Optional[float] = None
    high_tail: Optional[float] = None

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        s = np.asarray(self.psd, dtype=float)
        if f.ndim != 1 or f.shape != s.shape or f.size < 2:
            raise SpectrumError("a PSD table needs at least two (frequency, psd) rows")
        if np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise SpectrumError("table frequencies must be positive and strictly increasing")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise SpectrumError("table PSD values must be positive and finite")
        object.__setattr__(self, "frequency", tuple(map(float, f)))
        object.__setattr__(self, "psd", tuple(map(float, s)))

    def __call__(self, omega):
        f = np.abs(np.asarray(omega, dtype=float)) / TWO_PI
        logf = np.log(np.asarray(self.frequency))
        logs = np.log(np.asarray(self.psd))
        with np.errstate(divide="ignore"):
            lf = np.log(f)
        out = np.interp(lf, logf, logs)
        below = f < self.frequency[0]
        above = f > self.frequency[-1]
        if np.any(below):
            if self.low_tail is None:
                raise ExtrapolationError(
                    f"frequency below tabulated band ({self.frequency[0]} Hz) and no low tail set")
            out = np.where(below, logs[0] + self.low_tail * (lf - logf[0]), out)
        if np.any(above):
            if self.high_tail is None:
                raise ExtrapolationError(
                    f"frequency above tabulated band ({self.frequency[-1]} Hz) and no high tail set")
            out = np.where(above, logs[-1] + self.high_tail * (lf - logf[-1]), out)
        return np.exp(out)


@dataclass(frozen=True)
class Tabulated:
    """Force and/or sensing noise given as sampled tables; a missing table is zero."""

    force: Optional[PowerTable] = None
    sensing: Optional[PowerTable] = None
    family = "tabulated"


NoiseModel = Union[Quiet, White, Structural, LigoParam, SuspensionOnly, Tabulated]


def loss_angle(omega, loss, omega_c):
    """Frequency-dependent loss angle ``phi |W| / (|W| + W_c)``.

    Returns the magnitude; the odd-parity sign is applied where the complex
    spring is built.
    """
    if omega_c <= 0:
        raise SpectrumError("loss-angle cutoff must be positive")
    w = np.abs(np.asarray(omega, dtype=float))
    out = loss * w / (w + omega_c)
    return float(out) if out.ndim == 0 else out


def lorentzian_factor(omega, modes: Sequence[ResonantMode]):
    """``1 + sum A^2 / ((|W| - W_v)^2 + (Gamma_v/2)^2)``."""
    w = np.abs(np.asarray(omega, dtype=float))
    out = np.ones_like(w)
    for mode in modes:
        out = out + mode.amplitude**2 / ((w - mode.center)**2 + (0.5 * mode.fwhm)**2)
    return out


def _like(out, omega):
    return float(out) if np.ndim(omega) == 0 else out


def force_spectrum(model: NoiseModel, omega):
    """One-sided force-noise PSD ``S_nF(W)`` in N^2/Hz.

    Structural noise is regularized at DC as ``1/(|W| + W_c)``.
    """
    w = np.abs(np.asarray(omega, dtype=float))
    if isinstance(model, Quiet):
        out = np.zeros_like(w)
    elif isinstance(model, White):
        out = np.full_like(w, 2.0 * HBAR * model.mass * model.omega_f**2)
    elif isinstance(model, Structural):
        out = 2.0 * HBAR * model.mass * model.omega_f**3 / (w + model.omega_c)
    elif isinstance(model, LigoParam):
        out = model.tau_f * model.alpha_f1 / ((w / model.omega_f * model.alpha_f2)**14 + 1.0)
        if model.resonances:
            out = out * lorentzian_factor(w, model.resonances)
    elif isinstance(model, SuspensionOnly):
        out = model.tau_st / ((w / model.omega_st)**8 + 1.0)
    elif isinstance(model, Tabulated):
        out = model.force(w) if model.force is not None else np.zeros_like(w)
    else:
        raise SpectrumError(f"unknown noise model {model!r}")
    return _like(out, omega)


def sensing_spectrum(model: NoiseModel, omega):
    """One-sided sensing-noise PSD ``S_nX(W)`` in m^2/Hz."""
    w = np.abs(np.asarray(omega, dtype=float))
    if isinstance(model, Quiet):
        out = np.zeros_like(w)
    elif isinstance(model, White):
        out = np.full_like(w, 2.0 * HBAR / (model.mass * model.omega_x**2))
    elif isinstance(model, Structural):
        out = 2.0 * HBAR / (model.mass * model.omega_x * (w + model.omega_c))
    elif isinstance(model, (LigoParam, SuspensionOnly)):
        out = (model.tau_x1 * (w / model.omega_x)**2 * model.alpha_x1
               + model.tau_x2 * model.alpha_x2)
    elif isinstance(model, Tabulated):
        out = model.sensing(w) if model.sensing is not None else np.zeros_like(w)
    else:
        raise SpectrumError(f"unknown noise model {model!r}")
    return _like(out, omega)



def vacuum_input_spectrum(i, j):
    """Symmetrized one-sided spectrum of the vacuum input quadratures."""
    names = {"u1": 0, "u2": 1, 1: 0, 2: 1}
    try:
        return 1.0 if names[i] == names[j] else 0.0
    except KeyError:
        raise SpectrumError(f"vacuum inputs are u1 and u2, got ({i!r}, {j!r})") from None


_FIT_TARGETS = {"force": force_spectrum, "sensing": sensing_spectrum}

# JSON field names for fitted parameters
_TABLE_NAMES = {
    "tau_f": "tau_F", "omega_f": "omega_F", "alpha_f1": "alpha_F1", "alpha_f2": "alpha_F2",
    "tau_x1": "tau_X1", "tau_x2": "tau_X2", "omega_x": "omega_X",
    "alpha_x1": "alpha_X1", "alpha_x2": "alpha_X2", "tau_st": "tau_ST", "omega_st": "omega_ST",
    "loss": "phi", "omega_c": "Omega_c", "mass": "M",
}


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares fit.

    ``residual`` is the mean-squared error of ``log10(PSD)`` with sample
    weights uniform in log-frequency.
    """

    model: object
    residual: float
    n_samples: int
    iterations: int
    free: Tuple[str, ...]
    metadata: dict = field(default_factory=dict, compare=False)


def read_psd_csv(path) -> PowerTable:
    """Read a two-column ``frequency_hz, psd`` table; a text header is skipped."""
    freq, psd = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                f, s = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if freq:
                    raise SpectrumError(f"malformed row {row!r} in {path}") from None
                continue
            freq.append(f)
            psd.append(s)
    return PowerTable(tuple(freq), tuple(psd))


def _log_weights(frequency, psd):
    """Sorted positive samples and weights uniform in log-frequency."""
    f = np.asarray(frequency, dtype=float)
    s = np.asarray(psd, dtype=float)
    keep = (f > 0) & (s > 0) & np.isfinite(s)
    f, s = f[keep], s[keep]
    order = np.argsort(f)
    f, s = f[order], s[order]
    if f.size < 2:
        return f, s, np.ones_like(f)
    edges = np.log(f)
    mid = np.concatenate([[edges[0]], 0.5 * (edges[1:] + edges[:-1]), [edges[-1]]])
    w = np.diff(mid)
    return f, s, w / w.sum()


def fit_noise_model(samples, template, free: Sequence[str], target: str = "force",
                    max_iter: int = 500, gtol: float = 1e-10) -> FitResult:
    """Fit the ``free`` fields of ``template`` to a sampled PSD.

    Parameters
    ----------
    samples : PowerTable or (frequency_hz, psd) pair
    template : NoiseModel
        Family and starting values; fields not in ``free`` stay fixed.
    free : sequence of str
        Positive fields to adjust, fitted in log space.
    target : {"force", "sensing"}
        Which spectrum of the model is compared with the samples.

    Raises
    ------
    FitError
        Empty table or no convergence; ``best`` holds the last iterate.
    """
    if target not in _FIT_TARGETS:
        raise SpectrumError(f"target must be 'force' or 'sensing', got {target!r}")
    evaluate = _FIT_TARGETS[target]
    if isinstance(samples, PowerTable):
        freq, psd = samples.frequency, samples.psd
    else:
        freq, psd = samples
    freq, psd, weight = _log_weights(freq, psd)
    if freq.size < max(2, len(free)):
        raise FitError("not enough positive samples to fit", best=template)
    free = tuple(free)
    for name in free:
        if name not in {f.name for f in dataclasses.fields(template)}:
            raise SpectrumError(f"{type(template).__name__} has no field {name!r}")
    omega = TWO_PI * freq
    log_data = np.log10(psd)
    root_w = np.sqrt(weight)

    def build(theta):
        return dataclasses.replace(template, **{k: float(10.0**v) for k, v in zip(free, theta)})

    def residuals(theta):
        with np.errstate(divide="ignore", over="ignore"):
            model = evaluate(build(theta), omega)
            return root_w * (np.log10(np.maximum(model, 1e-300)) - log_data)

    x0 = np.log10([getattr(template, k) for k in free])
    sol = optimize.least_squares(residuals, x0, method="lm", max_nfev=max_iter * (len(free) + 1),
                                 gtol=gtol, xtol=1e-14, ftol=1e-14)
    best = build(sol.x)
    mse = float(np.sum(sol.fun**2))
    if not sol.success:
        raise FitError(f"fit did not converge: {sol.message}", best=best)
    meta = {"weighting": "log-uniform", "target": target,
            "band_hz": [float(freq[0]), float(freq[-1])]}
    return FitResult(best, mse, int(freq.size), int(sol.nfev), free, meta)


def model_to_json(model, **extra) -> str:
    """Serialize a noise model with conventional field names."""
    out = {"family": getattr(model, "family", type(model).__name__)}
    for f in dataclasses.fields(model):
        value = getattr(model, f.name)
        if f.name == "resonances":
            out["resonances"] = [{"Omega_v": r.center, "Gamma_v": r.fwhm, "A_v": r.amplitude}
                                 for r in value]
        elif isinstance(value, PowerTable):
            out[f.name] = {"frequency_hz": list(value.frequency), "psd": list(value.psd)}
        else:
            out[_TABLE_NAMES.get(f.name, f.name)] = value
    out.update(extra)
    return json.dumps(out, indent=2, sort_keys=True)
