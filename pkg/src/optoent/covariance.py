"""Discretized covariance matrix of mechanics, cavity and outgoing light.

The outgoing field is sampled at ``t_a = -(a + 1/2) dt`` for ``a = 0..N-1``.
Quadratures are ordered ``(B1, B2[, A1, A2], v1(t_0), v2(t_0), v1(t_1), ...)``.
With point sampling the light entries are

    V^{Qv}_{J, m a}   = sqrt(dt) <{Q_J, v_m(t_a)}>/2
    V^{vv}_{l a, m b} = dt <{v_l(t_a), v_m(t_b)}>/2

with the white part of the light spectra mapped to ``(S_white/2) delta_ab``.
Box sampling instead averages the field over each bin, which always yields
a bona fide covariance matrix but is a coarser description of the light.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dynamics
from .dynamics import cross_spectra, input_spectra
from .model import SystemParams
from .quadrature import (
    TAIL_ORDERS,
    Feature,
    FrequencyRule,
    IntegrationError,
    QuadratureSettings,
    asymptotic_coefficients,
    build_rule,
    tail_transform,
)
from .spectra import (
    LigoParam,
    NoiseModel,
    Quiet,
    Structural,
    SuspensionOnly,
    Tabulated,
    White,
    force_spectrum,
    loss_angle,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CovarianceError",
    "IntegrationError",
    "PARTITIONS",
    "TimeGrid",
    "IntegratorSettings",
    "CovarianceSet",
    "commutator_matrix",
    "spectral_features",
    "build_v_qq",
    "build_v_qv",
    "build_v_vv",
    "build_blocks",
    "assemble",
    "build_covariance",
    "partial_transpose",
    "trace_cavity",
    "save_covariance",
    "load_covariance",
]

PARTITIONS = {
    "full": "full",
    "with-cavity": "full",
    "traced": "traced",
    "cavity-traced": "traced",
    "adiabatic": "adiabatic",
    "adiabatic-no-cavity": "adiabatic",
}


class CovarianceError(ValueError):
    """Inconsistent covariance blocks or partition."""


def _partition(tag):
    try:
        return PARTITIONS[tag]
    except KeyError:
        raise CovarianceError(f"unknown partition {tag!r}; use one of {sorted(PARTITIONS)}") from None


@dataclass(frozen=True)
class TimeGrid:
    """``n_bins`` samples of the outgoing field, spaced ``dt`` seconds."""

    n_bins: int
    dt: float

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise CovarianceError("a time grid needs at least two bins")
        if not self.dt > 0:
            raise CovarianceError("dt must be positive")
        object.__setattr__(self, "n_bins", int(self.n_bins))

    @classmethod
    def from_duration(cls, duration, dt):
        return cls(int(round(duration / dt)), dt)

    @property
    def duration(self):
        return self.n_bins * self.dt

    @property
    def times(self):
        return -(np.arange(self.n_bins) + 0.5) * self.dt

    def to_dict(self):
        return {"n_bins": self.n_bins, "dt": self.dt}


@dataclass(frozen=True)
class IntegratorSettings:
    """Frequency-integration and discretization choices.

    ``sampling`` is ``"point"`` (instantaneous samples, Dirac deltas mapped to
    Kronecker deltas) or ``"box"`` (bin-averaged light modes).
    ``extended`` accumulates the frequency sums in long double.
    ``check_convergence`` repeats the integrals on a doubled rule and records
    the largest relative change.
    """

    quadrature: QuadratureSettings = QuadratureSettings()
    sampling: str = "point"
    extended: bool = False
    check_convergence: bool = False
    convergence_tol: float = 1e-6
    mech_zero_point: bool = False

    def __post_init__(self):
        if self.sampling not in ("point", "box"):
            raise CovarianceError(f"sampling must be 'point' or 'box', got {self.sampling!r}")

    def to_dict(self):
        return {"quadrature": self.quadrature.to_dict(), "sampling": self.sampling,
                "extended": self.extended, "check_convergence": self.check_convergence,
                "convergence_tol": self.convergence_tol,
                "mech_zero_point": self.mech_zero_point}


def commutator_matrix(n_modes_q: int, n_bins: int) -> np.ndarray:
    """Real antisymmetric ``J`` with ``K = iJ`` for ``n_modes_q`` discrete modes
    followed by ``n_bins`` light bins."""
    n = n_modes_q + n_bins
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class CovarianceSet:
    V: np.ndarray
    J: np.ndarray
    grid: TimeGrid
    partition: str
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.V.shape != self.J.shape or self.V.shape[0] != self.V.shape[1]:
            raise CovarianceError("V and J must be square and of equal size")

    @property
    def n_q(self):
        """Number of leading discrete quadratures (4 with cavity, else 2)."""
        return self.V.shape[0] - 2 * self.grid.n_bins

    @property
    def dim(self):
        return self.V.shape[0]

    @property
    def labels(self):
        q = ["B1", "B2", "A1", "A2"][: self.n_q]
        v = [f"v{m}[{a}]" for a in range(self.grid.n_bins) for m in (1, 2)]
        return q + v


def spectral_features(params: SystemParams, model: NoiseModel, kind: str):
    """Peaks and corners of the output spectra, and the dynamic scale that
    sets the top of the panel region."""
    feats = []
    scales = [params.mech_freq]
    damping = params.mech_damping
    if isinstance(model, Structural):
        damping = model.viscous_damping + params.mech_freq * loss_angle(
            params.mech_freq, model.loss, model.omega_c)
        feats.append(Feature(model.omega_c, model.omega_c))
    feats.append(Feature(params.mech_freq, 0.5 * damping))
    if params.coupling > 0:
        scales.append(params.omega_q)
        feats.append(Feature(params.omega_q, params.omega_q))
    if kind == "full":
        scales.append(params.cavity_decay)
        feats.append(Feature(params.cavity_decay, params.cavity_decay))
    if isinstance(model, (White, Structural)):
        scales += [model.omega_f, model.omega_x]
        feats += [Feature(model.omega_f, model.omega_f), Feature(model.omega_x, model.omega_x)]
    elif isinstance(model, LigoParam):
        corner = model.omega_f / model.alpha_f2
        feats.append(Feature(corner, 0.2 * corner))
        feats += [Feature(r.center, 0.5 * r.fwhm) for r in model.resonances]
        feats.append(Feature(model.omega_x, model.omega_x))
    elif isinstance(model, SuspensionOnly):
        feats.append(Feature(model.omega_st, 0.2 * model.omega_st))
        feats.append(Feature(model.omega_x, model.omega_x))
    elif isinstance(model, Tabulated):
        for table in (model.force, model.sensing):
            if table is not None:
                f = 2 * math.pi * np.asarray(table.frequency)
                feats += [Feature(f[0], 0.0), Feature(f[-1], 0.0)]
    return feats, max(scales)


def _q_v_indices(kind):
    if kind == "full":
        return [0, 1, 2, 3], [4, 5]
    return [0, 1], [2, 3]


def _mechanics_undamped(params, model):
    if isinstance(model, Structural):
        return model.loss == 0 and model.viscous_damping == 0
    return params.mech_damping == 0


class _Engine:
    """One pass over the frequency rule producing every block."""

    def __init__(self, params, model, grid, kind, integrator: IntegratorSettings):
        self.params, self.model, self.grid, self.kind = params, model, grid, kind
        self.integ = integrator
        self.q_idx, self.v_idx = _q_v_indices(kind)
        if _mechanics_undamped(params, model):
            drive = params.coupling > 0 or np.any(force_spectrum(model, np.array([params.mech_freq])) > 0)
            if drive:
                raise IntegrationError("undamped mechanics driven by noise has no stationary state")

    def spectra(self, omega):
        T = dynamics.transfer(omega, self.params, self.model, self.kind).matrix
        return cross_spectra(T, input_spectra(self.model, omega, self.params))

    def rule(self, settings: QuadratureSettings) -> FrequencyRule:
        feats, scale = spectral_features(self.params, self.model, self.kind)
        top = settings.top_factor * scale
        dt = self.grid.dt
        if self.integ.sampling == "box":
            top = max(top, settings.box_top_factor / dt)
        lag_max = self.grid.duration + dt
        return build_rule(feats, top, settings.max_phase / lag_max, settings)

    def run(self, settings: QuadratureSettings):
        rule = self.rule(settings)
        grid, dt, N = self.grid, self.grid.dt, self.grid.n_bins
        qi, vi = self.q_idx, self.v_idx
        nq = len(qi)
        box = self.integ.sampling == "box"
        acc_c = np.clongdouble if self.integ.extended else complex

        c0, tails = asymptotic_coefficients(self.spectra, rule.top)
        white = np.real(c0[np.ix_(vi, vi)])
        white = 0.5 * (white + white.T)
        scale_v = max(1.0, float(np.max(np.abs(white))))
        # spectra of the mechanics/cavity that settle on a plateau (a sensing
        # noise growing like W^2 feeds the cavity) are cut at the panel top
        q_plateau = c0[np.ix_(qi, qi)]
        qv_plateau = c0[np.ix_(qi, vi)]
        if np.max(np.abs(np.imag(c0[np.ix_(vi, vi)]))) > 1e-9 * scale_v:
            raise IntegrationError("light spectra approach a non-real plateau")

        qq = np.zeros((nq, nq), dtype=acc_c)
        qv = np.zeros((nq, 2, N), dtype=acc_c)
        vv = np.zeros((2, 2, N), dtype=acc_c)
        lags = np.arange(N) * dt
        chunk = max(256, int(4e6 // max(N, 1)))
        for start in range(0, rule.nodes.size, chunk):
            w = rule.nodes[start:start + chunk]
            wt = rule.weights[start:start + chunk]
            S = self.spectra(w)
            S_vv = S[:, vi][:, :, vi] - white[None]
            S_qv = S[:, qi][:, :, vi]
            qq += np.einsum("n,nij->ij", wt, S[:, qi][:, :, qi])
            # z^a with z = exp(-i W dt); t_a = -(a + 1/2) dt
            E = np.exp(-1j * np.outer(w, lags))
            half = np.exp(-0.5j * w * dt)
            if box:
                sinc = np.sinc(w * dt / (2 * math.pi))
                fac_qv, fac_vv = wt * half * sinc, wt * sinc**2
            else:
                fac_qv, fac_vv = wt * half, wt
            Eqv = E * fac_qv[:, None]
            Evv = E * fac_vv[:, None]
            if self.integ.extended:
                Eqv, Evv = Eqv.astype(acc_c), Evv.astype(acc_c)
                S_qv, S_vv = S_qv.astype(acc_c), S_vv.astype(acc_c)
            qv += np.einsum("nij,na->ija", S_qv, Eqv)
            vv += np.einsum("nij,na->ija", S_vv, Evv)

        # closed-form tails above the panel region
        a = {p: t for p, t in zip(TAIL_ORDERS, tails)}
        dev = np.abs(self.spectra(np.array([rule.top]))[0] - c0)
        # a 1/W term is genuine only if it carries the deviation from the plateau
        log_tail = np.abs(np.real(a[1])) / rule.top > 1e-3 * dev + 1e-13 * scale_v
        F0 = tail_transform(rule.top, np.zeros(1))
        for k, p in enumerate(TAIL_ORDERS):
            if p == 1:
                if np.any(log_tail[np.ix_(qi, qi)]):
                    raise IntegrationError("mechanics/cavity variance diverges logarithmically")
                continue
            qq += a[p][np.ix_(qi, qi)] * F0[k, 0]
        if not box:
            Fq = tail_transform(rule.top, grid.times)
            Fv = tail_transform(rule.top, -lags)
            if np.any(log_tail[np.ix_(vi, vi)]):
                raise IntegrationError(
                    "light spectrum has no white plateau at high frequency: point samples have "
                    "infinite variance; "
                    "use box sampling")
            for k, p in enumerate(TAIL_ORDERS):
                qv += a[p][np.ix_(qi, vi)][:, :, None] * Fq[k][None, None, :]
                tv = a[p][np.ix_(vi, vi)][:, :, None] * Fv[k][None, None, :]
                if p == 1:
                    tv[..., 0] = 0.0
                vv += tv
            qv += qv_plateau[:, :, None] * tail_transform(rule.top, grid.times, (0,))[0][None, None, :]
        qq = np.real(qq).astype(float) / (2 * math.pi)
        cut = float(np.max(np.abs(q_plateau))) * rule.top / (2 * math.pi)
        if cut > 1e-3 * max(float(np.max(np.abs(np.diag(qq)))), 1e-300):
            raise IntegrationError("mechanics/cavity spectra do not decay at high frequency")
        qv = np.real(qv).astype(float) * math.sqrt(dt) / (2 * math.pi)
        lagcorr = np.real(vv).astype(float) / (2 * math.pi)
        qq = 0.5 * (qq + qq.T)
        if self.integ.mech_zero_point:
            qq[0, 0] += 0.5
            qq[1, 1] += 0.5
        info = {"top": rule.top, "n_nodes": int(rule.nodes.size), "q_plateau_cut": cut,
                "white": white.tolist()}
        return qq, _interleave(qv), lagcorr, white, info


def _interleave(qv):
    # (nq, 2, N) -> (nq, 2N) with columns v1(t0), v2(t0), v1(t1), ...
    nq, _, N = qv.shape
    return np.transpose(qv, (0, 2, 1)).reshape(nq, 2 * N)


def _toeplitz_vv(lagcorr, white, dt):
    """Block-Toeplitz ``V^{vv}`` from lag correlations ``C_lm(k dt)``."""
    N = lagcorr.shape[-1]
    k = np.arange(N)[None, :] - np.arange(N)[:, None]  # alpha' - alpha
    blocks_pos = dt * np.transpose(lagcorr, (2, 0, 1))  # (N, 2, 2), [k, l, m]
    pos = blocks_pos[np.abs(k)]  # (N, N, 2, 2)
    neg = np.swapaxes(pos, -1, -2)
    B = np.where((k >= 0)[:, :, None, None], pos, neg)
    B = B + (np.eye(N)[:, :, None, None] * 0.5 * white[None, None])
    return np.transpose(B, (0, 2, 1, 3)).reshape(2 * N, 2 * N)


def _kind(partition):
    return "adiabatic" if _partition(partition) == "adiabatic" else "full"


def build_blocks(params: SystemParams, model: NoiseModel, grid: TimeGrid,
                 partition="full", integrator: IntegratorSettings = IntegratorSettings()):
    """All covariance blocks in one frequency pass.

    Returns a dict with ``qq``, ``qv``, ``vv`` and an ``info`` dict.
    """
    kind = _kind(partition)
    engine = _Engine(params, model, grid, kind, integrator)
    t0 = time.perf_counter()
    qq, qv, lagcorr, white, info = engine.run(integrator.quadrature)
    vv = _toeplitz_vv(lagcorr, white, grid.dt)
    info["seconds"] = time.perf_counter() - t0
    if integrator.check_convergence:
        qq2, qv2, lag2, white2, _ = engine.run(integrator.quadrature.refined())
        vv2 = _toeplitz_vv(lag2, white2, grid.dt)
        full1 = _stack(qq, qv, vv)
        full2 = _stack(qq2, qv2, vv2)
        change = float(np.max(np.abs(full1 - full2)) / max(np.max(np.abs(full1)), 1e-300))
        info["refinement_change"] = change
        if change > integrator.convergence_tol:
            raise IntegrationError(
                f"frequency integration not converged: relative change {change:.3g} "
                f"> {integrator.convergence_tol:g}")
    return {"qq": qq, "qv": qv, "vv": vv, "info": info, "kind": kind}


def _stack(qq, qv, vv):
    top = np.hstack([qq, qv])
    bottom = np.hstack([qv.T, vv])
    return np.vstack([top, bottom])


def build_v_qq(params, model, integrator: IntegratorSettings = IntegratorSettings(),
               partition="full", grid: Optional[TimeGrid] = None):
    """Equal-time covariance of the mechanical (and cavity) quadratures."""
    kind = _kind(partition)
    grid = grid or TimeGrid(2, 1e-3)
    engine = _Engine(params, model, grid, kind, integrator)
    return engine.run(integrator.quadrature)[0]


def build_v_qv(params, model, grid: TimeGrid,
               integrator: IntegratorSettings = IntegratorSettings(), partition="full"):
    """Correlations between the discrete quadratures and the light bins."""
    return build_blocks(params, model, grid, partition, integrator)["qv"]


def build_v_vv(params, model, grid: TimeGrid,
               integrator: IntegratorSettings = IntegratorSettings(), partition="full"):
    """Block-Toeplitz covariance of the light bins."""
    return build_blocks(params, model, grid, partition, integrator)["vv"]


def assemble(partition, blocks, grid: TimeGrid, metadata=None) -> CovarianceSet:
    """Stack blocks into a covariance set for the requested partition.

    ``blocks`` holds ``qq``, ``qv`` and ``vv``. For the traced partition the
    cavity rows and columns are deleted from a with-cavity set.
    """
    part = _partition(partition)
    qq, qv, vv = (np.asarray(blocks[k], dtype=float) for k in ("qq", "qv", "vv"))
    N = grid.n_bins
    if vv.shape != (2 * N, 2 * N) or qv.shape[1] != 2 * N or qv.shape[0] != qq.shape[0]:
        raise CovarianceError("block dimensions do not match the time grid")
    nq = qq.shape[0]
    if part in ("full", "traced") and nq != 4:
        raise CovarianceError(f"{part} partition needs the cavity quadratures")
    if part == "adiabatic" and nq != 2:
        raise CovarianceError("adiabatic partition has no cavity quadratures")
    V = _stack(qq, qv, vv)
    V = 0.5 * (V + V.T)
    meta = dict(metadata or {})
    meta["partition"] = part
    cs = CovarianceSet(V, commutator_matrix(nq // 2, N), grid,
                       "full" if part == "traced" else part, meta)
    return trace_cavity(cs) if part == "traced" else cs


def trace_cavity(cs: CovarianceSet) -> CovarianceSet:
    """Delete the cavity rows and columns from a with-cavity set."""
    if cs.partition != "full":
        raise CovarianceError("only a with-cavity set contains the cavity mode")
    keep = np.r_[0:2, 4:cs.dim]
    meta = dict(cs.metadata)
    meta["partition"] = "traced"
    return CovarianceSet(cs.V[np.ix_(keep, keep)], cs.J[np.ix_(keep, keep)], cs.grid,
                         "traced", meta)


def partial_transpose(cs: CovarianceSet) -> CovarianceSet:
    """Flip the sign of the mechanical momentum row and column.

    The (B2, B2) element is left alone; the commutator is unchanged.
    """
    V = cs.V.copy()
    V[1, :] *= -1.0
    V[:, 1] *= -1.0
    meta = dict(cs.metadata)
    meta["transposed"] = not meta.get("transposed", False)
    return CovarianceSet(V, cs.J, cs.grid, cs.partition, meta)


def _model_summary(model):
    d = {"family": getattr(model, "family", type(model).__name__)}
    for key, value in vars(model).items():
        if key == "resonances":
            d[key] = [vars(r) for r in value]
        elif hasattr(value, "frequency"):
            d[key] = {"frequency": list(value.frequency), "psd": list(value.psd),
                      "low_tail": value.low_tail, "high_tail": value.high_tail}
        else:
            d[key] = value
    return d


def provenance(params, model, grid, integrator, partition):
    meta = {
        "params": params.to_dict(),
        "model": _model_summary(model),
        "grid": grid.to_dict(),
        "integrator": integrator.to_dict(),
        "partition": _partition(partition),
    }
    blob = json.dumps(meta, sort_keys=True, default=float).encode()
    meta["hash"] = hashlib.sha256(blob).hexdigest()[:16]
    return meta


def build_covariance(params: SystemParams, model: NoiseModel, grid: TimeGrid,
                     partition="full",
                     integrator: IntegratorSettings = IntegratorSettings()) -> CovarianceSet:
    """Covariance set of the given partition with provenance metadata."""
    blocks = build_blocks(params, model, grid, partition, integrator)
    meta = provenance(params, model, grid, integrator, partition)
    meta["integration"] = blocks["info"]
    return assemble(partition, blocks, grid, meta)


def save_covariance(cs: CovarianceSet, path) -> Path:
    """Write ``<path>.npz`` with the matrices and ``<path>.json`` with metadata."""
    path = Path(path)
    np.savez(path.with_suffix(".npz"), V=cs.V, J=cs.J)
    sidecar = dict(cs.metadata)
    sidecar.update({"grid": cs.grid.to_dict(), "partition": cs.partition})
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=float))
    return path.with_suffix(".npz")


def load_covariance(path) -> CovarianceSet:
    path = Path(path)
    data = np.load(path.with_suffix(".npz"))
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = TimeGrid(**meta["grid"])
    return CovarianceSet(data["V"], data["J"], grid, meta["partition"], meta)
