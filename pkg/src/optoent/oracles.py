"""Small independent references: analytic Gaussian states and a white-noise
steady-state solver.

Covariances use the convention ``V_jk = <{R_j, R_k}>/2`` with ``[R1, R2] = i``
per mode, so the vacuum is ``I/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import HBAR, SystemParams
from .spectra import White, force_spectrum, sensing_spectrum

__all__ = [
    "OracleError",
    "AnalyticState",
    "vacuum_state",
    "thermal_state",
    "tmsv_covariance",
    "lyapunov_qq",
    "drift_diffusion",
]


class OracleError(ArithmeticError):
    """The oracle has no steady state."""


@dataclass(frozen=True)
class AnalyticState:
    label: str
    V: np.ndarray

    @property
    def J(self):
        return np.kron(np.eye(self.V.shape[0] // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def vacuum_state(n_modes: int = 1) -> AnalyticState:
    return AnalyticState("vacuum", 0.5 * np.eye(2 * n_modes))


def thermal_state(n: float) -> AnalyticState:
    """Single mode with mean occupation ``n``; variance ``n + 1/2``."""
    if n < 0:
        raise ValueError("occupation must be non-negative")
    return AnalyticState(f"thermal({n:g})", (n + 0.5) * np.eye(2))


def tmsv_covariance(r: float) -> AnalyticState:
    """Two-mode squeezed vacuum in standard form.

    Ordering ``(x_a, p_a, x_b, p_b)``; the PPT-transformed state has minimal
    normalized symplectic eigenvalue ``exp(-2r)``.
    """
    if r < 0:
        raise ValueError("squeezing parameter must be non-negative")
    c, s = 0.5 * math.cosh(2 * r), 0.5 * math.sinh(2 * r)
    V = np.array([
        [c, 0, s, 0],
        [0, c, 0, -s],
        [s, 0, c, 0],
        [0, -s, 0, c],
    ])
    return AnalyticState(f"tmsv({r:g})", V)


def drift_diffusion(params: SystemParams, model):
    """Drift ``A`` and diffusion ``D`` of ``(B1, B2, A1, A2)``.

    Inputs ``(u1, u2, nX, nF)`` are delta-correlated with the symmetrized
    one-sided strengths of the white model.
    """
    if not isinstance(model, White) and model is not None:
        raise OracleError("the Lyapunov oracle needs white noise")
    wm, gm, gam, G = params.mech_freq, params.mech_damping, params.cavity_decay, params.coupling
    xz, pz = params.x_zpf, params.p_zpf
    A = np.array([
        [0.0, wm, 0.0, 0.0],
        [-wm, -gm, math.sqrt(2.0) * HBAR * G / pz, 0.0],
        [0.0, 0.0, -gam, 0.0],
        [math.sqrt(2.0) * G * xz, 0.0, 0.0, -gam],
    ])
    B = np.zeros((4, 4))
    B[1, 3] = 1.0 / pz
    B[2, 0] = math.sqrt(2.0 * gam)
    B[3, 1] = math.sqrt(2.0 * gam)
    B[3, 2] = math.sqrt(2.0) * G
    if model is None:
        s = np.array([1.0, 1.0, 0.0, 0.0])
    else:
        s = np.array([1.0, 1.0, sensing_spectrum(model, 0.0),
                      force_spectrum(model, 0.0)])
    D = B @ np.diag(0.5 * s) @ B.T
    return A, D


def lyapunov_qq(params: SystemParams, model=None) -> np.ndarray:
    """Steady-state covariance of mechanics and cavity under white noise.

    ``model=None`` means no classical noise.
    """
    A, D = drift_diffusion(params, model)
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise OracleError("drift matrix is not stable")
    V = linalg.solve_continuous_lyapunov(A, -D)
    return 0.5 * (V + V.T)
