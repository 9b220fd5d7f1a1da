"""Physicality and PPT tests, logarithmic negativity and the entangled mode.

Normalized symplectic eigenvalues are ``2 |eig(iJ V)|`` so that the vacuum
has every eigenvalue equal to one, matching the ``V + iJ/2 >= 0`` boundary.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .covariance import CovarianceSet, partial_transpose

logger = logging.getLogger(__name__)

__all__ = [
    "EntanglementError",
    "Verdict",
    "ModeFit",
    "ModeFunction",
    "EntanglementReport",
    "ScanPoint",
    "ScanResult",
    "numerical_epsilon",
    "physicality_lambda",
    "ppt_lambda",
    "symplectic_spectrum",
    "log_negativity",
    "verdict",
    "analyze",
    "convergence_scan",
    "extract_mode",
    "fit_mode",
]


class EntanglementError(ValueError):
    """Precondition of an entanglement computation not met."""


class Verdict(str, enum.Enum):
    ENTANGLED = "Entangled"
    SEPARABLE = "Separable"
    UNDECIDABLE = "Undecidable"

    def __str__(self):
        return self.value


def _matrices(cs):
    if isinstance(cs, CovarianceSet):
        return cs.V, cs.J
    V, J = cs
    return np.asarray(V, dtype=float), np.asarray(J, dtype=float)


def numerical_epsilon(V) -> float:
    """Zero threshold for eigenvalue signs.

    The larger of ``1e-9`` and ``16 u ||V||_2``, the scale of the eigenvalue
    perturbation left by a backward-stable Hermitian eigensolve (``u`` the
    unit roundoff).
    """
    V = np.asarray(V)
    norm = float(np.max(np.abs(linalg.eigvalsh(V, subset_by_index=[V.shape[0] - 1] * 2))))
    return max(1e-9, 16.0 * np.finfo(float).eps * norm)


def _min_eig(V, J):
    return float(linalg.eigvalsh(V + 0.5j * J, subset_by_index=[0, 0])[0])


def physicality_lambda(cs) -> float:
    """Smallest eigenvalue of ``V + iJ/2``; negative means non-physical."""
    V, J = _matrices(cs)
    return _min_eig(V, J)


def _transposed(cs):
    if isinstance(cs, CovarianceSet):
        return partial_transpose(cs)
    V, J = _matrices(cs)
    V = V.copy()
    V[1, :] *= -1
    V[:, 1] *= -1
    return V, J


def ppt_lambda(cs) -> float:
    """Smallest eigenvalue of ``V_pt + iJ/2``; negative means entangled
    (for a physical ``V``)."""
    return physicality_lambda(_transposed(cs))


def symplectic_spectrum(cs, transposed: bool = False) -> np.ndarray:
    """Sorted normalized symplectic eigenvalues, one per conjugate pair.

    Uses the Hermitian form ``V^(1/2) iJ V^(1/2)`` when ``V`` is positive
    definite and falls back to a general eigensolve of ``iJV`` otherwise.
    """
    if transposed:
        cs = _transposed(cs)
    V, J = _matrices(cs)
    w, U = linalg.eigh(V)
    if w.min() > 0:
        root = (U * np.sqrt(w)) @ U.T
        ev = linalg.eigvalsh(root @ (1j * J) @ root)
        nu = 2.0 * np.sort(ev[ev > 0])
        if nu.size == V.shape[0] // 2:
            return nu
    logger.warning("V is not positive definite (min eigenvalue %.3g); "
                   "using the general eigensolver", w.min())
    ev = np.abs(linalg.eigvals(1j * J @ V))
    ev = np.sort(ev)
    return 2.0 * ev[::2]


def log_negativity(nu, tol: float = 1e-9) -> float:
    """``sum max(0, -log2 nu)`` over normalized symplectic eigenvalues.

    Eigenvalues within ``tol`` of one count as one.
    """
    nu = np.asarray(nu, dtype=float)
    small = nu[nu < 1.0 - tol]
    return float(np.sum(-np.log2(np.maximum(small, 1e-300))))


def verdict(lambda_b: float, lambda_n: float, eps: float = 0.0) -> Verdict:
    """Decide entanglement from the physicality and PPT eigenvalues.

    Values with magnitude at most ``eps`` count as zero.
    """
    lb = 0.0 if abs(lambda_b) <= eps else lambda_b
    ln = 0.0 if abs(lambda_n) <= eps else lambda_n
    if lb >= 0 and ln < 0:
        return Verdict.ENTANGLED
    if lb < 0 and ln < 0 and abs(ln) >= 100 * abs(lb):
        return Verdict.ENTANGLED
    if lb >= 0 and ln >= 0:
        return Verdict.SEPARABLE
    return Verdict.UNDECIDABLE


@dataclass
class ModeFit:
    omega: float
    gamma: float
    phases: List[float]
    amplitudes: List[float]
    residual: float
    ok: bool = True
    message: str = ""

    def model(self, t):
        t = np.asarray(t, dtype=float)
        env = np.exp(-self.gamma * np.abs(t))
        return np.array([a * env * np.sin(self.omega * t + th)
                         for a, th in zip(self.amplitudes, self.phases)])


@dataclass
class ModeFunction:
    """Light part of the PPT-violating eigenvector.

    ``e1`` and ``e2`` are sampled at ``times`` so that ``e(t_a) sqrt(dt)`` are
    the eigenvector components; ``vector`` is the full unit-norm eigenvector.
    """

    times: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    vector: np.ndarray
    eigenvalue: float
    fit: Optional[ModeFit] = None

    @property
    def curves(self):
        return np.array([self.e1.real, self.e1.imag, self.e2.real, self.e2.imag])

    def to_table(self) -> str:
        rows = ["t,re_e1,im_e1,re_e2,im_e2"]
        for t, a, b, c, d in zip(self.times, *self.curves):
            rows.append(f"{t:.9e},{a:.9e},{b:.9e},{c:.9e},{d:.9e}")
        return "\n".join(rows) + "\n"


@dataclass
class EntanglementReport:
    lambda_b: float
    lambda_n: float
    nu_min: float
    log_negativity: float
    verdict: Verdict
    eps: float
    mode: Optional[ModeFunction] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "lambda_B": self.lambda_b,
            "lambda_N": self.lambda_n,
            "nu_min": self.nu_min,
            "E_N": self.log_negativity,
            "verdict": str(self.verdict),
            "eps": self.eps,
        }
        if self.mode is not None and self.mode.fit is not None:
            f = self.mode.fit
            d["fit"] = {"omega": f.omega, "gamma": f.gamma, "phases": f.phases,
                        "amplitudes": f.amplitudes, "residual": f.residual, "ok": f.ok}
        d.update(self.metadata)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, default=float)


def analyze(cs: CovarianceSet, mode: bool = False) -> EntanglementReport:
    """Full entanglement report of a covariance set across the mechanics /
    rest cut."""
    eps = numerical_epsilon(cs.V)
    lb = physicality_lambda(cs)
    pt = partial_transpose(cs)
    ln = physicality_lambda(pt)
    nu = symplectic_spectrum(pt)
    v = verdict(lb, ln, eps)
    if v is Verdict.SEPARABLE and -eps <= ln < 0 and eps > 1e-9:
        # a negative lambda_N lost in roundoff is unresolved, not separable
        v = Verdict.UNDECIDABLE
    report = EntanglementReport(lb, ln, float(nu[0]), log_negativity(nu), v, eps)
    if mode and ln < -eps:
        report.mode = extract_mode(pt)
    return report


@dataclass
class ScanPoint:
    dt: float
    lambda_b: Optional[float]
    lambda_n: Optional[float]
    error: Optional[str] = None


@dataclass
class ScanResult:
    points: List[ScanPoint]
    converged: bool


def _close(a, b, rel, eps):
    return abs(a - b) <= rel * max(abs(a), abs(b)) or max(abs(a), abs(b)) <= eps


def convergence_scan(build: Callable[[float], CovarianceSet], dts: Sequence[float],
                     rel_tol: float = 0.05) -> ScanResult:
    """Evaluate ``(lambda_B, lambda_N)`` over descending ``dts``.

    ``build`` maps a step to a covariance set. Failures are recorded per point
    and the scan continues. Converged means both eigenvalues changed by less
    than ``rel_tol`` between the last two successful steps.
    """
    dts = list(dts)
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise EntanglementError("dt list must be strictly descending")
    points, eps = [], 0.0
    for dt in dts:
        try:
            cs = build(dt)
            eps = max(eps, numerical_epsilon(cs.V))
            points.append(ScanPoint(dt, physicality_lambda(cs), ppt_lambda(cs)))
        except Exception as exc:  # noqa: BLE001 - recorded and reported
            logger.warning("scan point dt=%g failed: %s", dt, exc)
            points.append(ScanPoint(dt, None, None, f"{type(exc).__name__}: {exc}"))
    good = [p for p in points if p.error is None]
    converged = len(good) >= 2 and good[-1] is points[-1] and \
        _close(good[-1].lambda_b, good[-2].lambda_b, rel_tol, eps) and \
        _close(good[-1].lambda_n, good[-2].lambda_n, rel_tol, eps)
    return ScanResult(points, bool(converged))


def extract_mode(cs_pt: CovarianceSet, fit: bool = True) -> ModeFunction:
    """Eigenvector of ``V_pt + iJ/2`` with the most negative eigenvalue.

    ``cs_pt`` must already be partially transposed. The global phase is
    chosen so the real parts carry as much weight as possible.
    """
    lam, vec = linalg.eigh(cs_pt.V + 0.5j * cs_pt.J, subset_by_index=[0, 0])
    lam = float(lam[0])
    if lam >= -numerical_epsilon(cs_pt.V):
        raise EntanglementError("V_pt + iJ/2 has no negative eigenvalue")
    xi = vec[:, 0]
    xi = xi / np.linalg.norm(xi)
    # maximize |Re xi|^2: rotate by half the phase of sum xi^2
    xi = xi * np.exp(-0.5j * np.angle(np.sum(xi**2)))
    nq, dt = cs_pt.n_q, cs_pt.grid.dt
    e1 = xi[nq::2] / math.sqrt(dt)
    e2 = xi[nq + 1::2] / math.sqrt(dt)
    mf = ModeFunction(cs_pt.grid.times, e1, e2, xi, lam)
    if fit:
        mf.fit = fit_mode(mf.times, mf.curves)
    return mf


def _design(t, omega, gamma):
    env = np.exp(-gamma * np.abs(t))
    return np.column_stack([env * np.sin(omega * t), env * np.cos(omega * t)])


def _project(params, t, curves):
    omega, gamma = np.exp(params)
    X = _design(t, omega, gamma)
    coef, *_ = np.linalg.lstsq(X, curves.T, rcond=None)
    return (X @ coef).T - curves, coef


def fit_mode(t, curves) -> ModeFit:
    """Shared-frequency, shared-decay fit ``A_c exp(-g|t|) sin(w t + th_c)``.

    Amplitudes and phases enter linearly and are projected out; ``w`` and
    ``g`` start from the spectral peak of the third curve's complex partner.
    ``residual`` is the unexplained fraction of the total variance.
    """
    t = np.asarray(t, dtype=float)
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    total = float(np.sum(curves**2))
    if total == 0 or t.size < 4:
        return ModeFit(math.nan, math.nan, [], [], 1.0, False, "empty mode")
    dt = abs(t[1] - t[0])
    series = curves[2] + 1j * curves[3] if curves.shape[0] >= 4 else curves[0]
    n_fft = 8 * t.size
    freqs = 2 * math.pi * np.fft.fftfreq(n_fft, dt)
    power = np.abs(np.fft.fft(series, n_fft))
    power[0] = 0.0
    w0 = max(abs(freqs[np.argmax(power)]), 2 * math.pi / (t.size * dt))
    duration = t.size * dt
    best = None
    for g0 in (0.3 * w0, w0, 3.0 / duration, 10.0 / duration):
        x0 = np.log([w0, max(g0, 1e-3 / duration)])
        try:
            sol = optimize.least_squares(lambda p: _project(p, t, curves)[0].ravel(), x0,
                                         method="lm", max_nfev=2000)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        return ModeFit(math.nan, math.nan, [], [], 1.0, False, "fit diverged")
    res, coef = _project(best.x, t, curves)
    omega, gamma = np.exp(best.x)
    amps = np.hypot(coef[0], coef[1])
    phases = np.arctan2(coef[1], coef[0])
    resid = float(np.sum(res**2) / total)
    return ModeFit(float(omega), float(gamma), phases.tolist(), amps.tolist(), resid,
                   bool(best.success), str(best.message))
