"""Positive-frequency quadrature for one-sided spectra and their Fourier transforms.

Integrals of the form ``int_0^inf S(W) exp(iWs) dW`` are split at a top
frequency ``W_top``. Below it, composite Gauss-Legendre panels are placed on a
logarithmic grid, refined geometrically around every spectral feature (narrow
resonances, corners) and capped in width so that the phase ``W s`` changes by
a bounded amount per panel. Above it the spectrum is replaced by its
asymptotic expansion ``W_inf + sum_p a_p W^-p``, whose transform is known in
closed form through the exponential integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy import special

__all__ = [
    "IntegrationError",
    "Feature",
    "QuadratureSettings",
    "FrequencyRule",
    "build_rule",
    "asymptotic_coefficients",
    "tail_transform",
]

TAIL_ORDERS = (1, 2, 3, 4, 5)


class IntegrationError(ArithmeticError):
    """A frequency integral cannot be evaluated to the requested accuracy."""


@dataclass(frozen=True)
class Feature:
    """Spectral structure at ``center`` (rad/s) with half-width ``width``."""

    center: float
    width: float


@dataclass(frozen=True)
class QuadratureSettings:
    """Knobs of the frequency rule.

    ``refine`` multiplies every density (panels per decade, points per
    feature, phase resolution); the convergence gate compares ``refine`` with
    ``2 * refine``.
    """

    order: int = 16
    panels_per_decade: int = 8
    max_phase: float = 8.0
    top_factor: float = 100.0
    floor_factor: float = 1e-6
    refine: float = 1.0
    box_top_factor: float = 400.0
    max_nodes: int = 4_000_000

    def refined(self, factor=2.0) -> "QuadratureSettings":
        return QuadratureSettings(self.order, self.panels_per_decade, self.max_phase,
                                  self.top_factor, self.floor_factor,
                                  self.refine * factor, self.box_top_factor, self.max_nodes)

    def to_dict(self):
        return dict(order=self.order, panels_per_decade=self.panels_per_decade,
                    max_phase=self.max_phase, top_factor=self.top_factor,
                    floor_factor=self.floor_factor, refine=self.refine,
                    box_top_factor=self.box_top_factor, max_nodes=self.max_nodes)


@dataclass
class FrequencyRule:
    nodes: np.ndarray
    weights: np.ndarray
    top: float
    breaks: np.ndarray = field(repr=False)


def _feature_breaks(feature: Feature, top: float, density: float) -> List[float]:
    c, w = feature.center, feature.width
    if w <= 0 or c <= 0:
        return [c] if 0 < c < top else []
    out = [c]
    step = 2.0 ** (1.0 / density)
    d = w / 8.0
    while d < 4.0 * c and c + d < top:
        out.append(c + d)
        if c - d > 0.25 * c:
            out.append(c - d)
        d *= step
    return out


def build_rule(features: Iterable[Feature], top: float, max_width: float = math.inf,
               settings: QuadratureSettings = QuadratureSettings()) -> FrequencyRule:
    """Composite Gauss-Legendre rule on ``[0, top]``.

    Parameters
    ----------
    features : iterable of Feature
        Peaks and corners that need local refinement.
    top : float
        Upper end of the panel region, rad/s.
    max_width : float
        Largest admissible panel width (set from the longest time lag).
    """
    features = [f for f in features if f.center > 0]
    scales = [f.center for f in features] + [f.width for f in features if f.width > 0]
    lo = settings.floor_factor * min(scales) if scales else settings.floor_factor * top
    ppd = settings.panels_per_decade * settings.refine
    n_geo = max(2, int(math.ceil(math.log10(top / lo) * ppd)) + 1)
    breaks = [0.0, *np.geomspace(lo, top, n_geo)]
    for feat in features:
        breaks.extend(_feature_breaks(feat, top, settings.refine))
    breaks = np.unique(np.clip(np.asarray(breaks, dtype=float), 0.0, top))
    if np.isfinite(max_width):
        max_width = max_width / settings.refine
        widths = np.diff(breaks)
        counts = np.maximum(1, np.ceil(widths / max_width).astype(int))
        if counts.sum() * settings.order > settings.max_nodes:
            raise IntegrationError(
                f"frequency rule needs {counts.sum() * settings.order} nodes "
                f"(limit {settings.max_nodes}): the band up to {top:.3g} rad/s is too wide "
                "for the longest time lag")
        pieces = [np.linspace(a, b, k + 1)[:-1] for a, b, k in zip(breaks[:-1], breaks[1:], counts)]
        breaks = np.append(np.concatenate(pieces), breaks[-1])
    x, wx = np.polynomial.legendre.leggauss(settings.order)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * wx[None, :]).ravel()
    return FrequencyRule(nodes, weights, float(top), breaks)


def asymptotic_coefficients(evaluate, top: float, orders: Sequence[int] = TAIL_ORDERS):
    """Fit ``S(W) ~ c0 + sum_p a_p W^-p`` from samples at ``top * 2^k``.

    ``evaluate`` maps an array of frequencies to stacked spectra (n, ...).
    Returns ``(c0, [a_p])`` with the trailing shape of the spectra.
    """
    n = len(orders) + 1
    omegas = top * 2.0 ** np.arange(n)
    vals = evaluate(omegas)
    design = np.column_stack([np.ones(n)] + [(top / omegas) ** p for p in orders])
    flat = vals.reshape(n, -1)
    coef = np.linalg.solve(design, flat)
    shape = vals.shape[1:]
    c0 = coef[0].reshape(shape)
    tails = [coef[i + 1].reshape(shape) * top ** p for i, p in enumerate(orders)]
    return c0, tails


def tail_transform(top: float, s, orders: Sequence[int] = TAIL_ORDERS):
    """``int_top^inf W^-p exp(iWs) dW`` for each order ``p`` and lag ``s``.

    Returns an array of shape (len(orders), len(s)). At ``s = 0`` the
    ``p = 0`` and ``p = 1`` moments diverge and are returned as ``nan``;
    for ``p = 0`` and ``s != 0`` the Abel-regularized value is used.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty((len(orders), s.size), dtype=complex)
    zero = s == 0
    phase = np.exp(1j * top * s)
    prev = np.full(s.size, np.nan + 0j)
    nz = ~zero
    prev[nz] = special.exp1(-1j * top * s[nz])
    moments = {1: prev}
    zeroth = np.full(s.size, np.nan + 0j)
    zeroth[nz] = 1j * phase[nz] / s[nz]
    moments[0] = zeroth
    pmax = max(orders)
    for p in range(2, pmax + 1):
        cur = phase / ((p - 1) * top ** (p - 1)) + 1j * s / (p - 1) * moments[p - 1]
        cur = np.where(zero, top ** (1 - p) / (p - 1), cur)
        moments[p] = cur
    for i, p in enumerate(orders):
        out[i] = moments[p]
    return out
