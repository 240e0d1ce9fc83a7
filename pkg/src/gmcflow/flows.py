"""Normal velocity laws V(H) and their calculus.

Every law is a smooth, strictly increasing bijection from the admissible
curvature interval [h_lo, h_hi] onto its image; evaluations clamp the
curvature (resp. the velocity, for the inverse) into that interval first.
The clamp is a truncation device for runs that leave the assumed regime
(sign-changing curvature); `clamp_report` makes its activity observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class FlowLawError(ValueError):
    pass


@dataclass(frozen=True)
class FlowLaw:
    """Velocity law with clamped evaluation of V, V' and V^-1.

    kind is one of mcf, imcf, power_mcf, power_imcf, log_mcf; alpha is the
    exponent of the power laws and h_shift the offset of the logarithmic
    law."""

    kind: str
    alpha: float = 1.0
    h_shift: float = 0.0
    h_lo: float = 1e-3
    h_hi: float = 1e3
    d: int = field(default=2, repr=False)  # surface dimension, for exact radii

    def __post_init__(self):
        if not (0.0 < self.h_lo < self.h_hi):
            raise FlowLawError("need 0 < h_lo < h_hi")
        if self.kind in ("power_mcf", "power_imcf") and self.alpha <= 0:
            raise FlowLawError("power laws need alpha > 0")
        if self.kind == "log_mcf" and self.h_lo + self.h_shift <= math.e:
            raise FlowLawError(
                "log law needs h_lo + h_shift > e for strict monotonicity"
            )
        if self.kind not in ("mcf", "imcf", "power_mcf", "power_imcf", "log_mcf"):
            raise FlowLawError(f"unknown flow law '{self.kind}'")

    # -- clamps ------------------------------------------------------------

    def clamp_H(self, H):
        return np.clip(H, self.h_lo, self.h_hi)

    @property
    def image(self) -> tuple[float, float]:
        """The admissible velocity interval [V(h_lo), V(h_hi)]."""
        return (self._V_raw(self.h_lo), self._V_raw(self.h_hi))

    def clamp_V(self, w):
        lo, hi = self.image
        return np.clip(w, lo, hi)

    # -- closed forms --------------------------------------------------------

    def _V_raw(self, H):
        if self.kind == "mcf":
            return H
        if self.kind == "imcf":
            return -1.0 / H
        if self.kind == "power_mcf":
            return H**self.alpha
        if self.kind == "power_imcf":
            return -(H ** -self.alpha)
        shifted = H + self.h_shift
        return shifted / np.log(shifted)

    def V(self, H):
        """Normal velocity at (clamped) mean curvature H."""
        return self._V_raw(self.clamp_H(np.asarray(H, dtype=float)))

    def dV(self, H):
        """Derivative V'(H), strictly positive on the clamp interval."""
        H = self.clamp_H(np.asarray(H, dtype=float))
        if self.kind == "mcf":
            return np.ones_like(H)
        if self.kind == "imcf":
            return 1.0 / H**2
        if self.kind == "power_mcf":
            return self.alpha * H ** (self.alpha - 1.0)
        if self.kind == "power_imcf":
            return self.alpha * H ** (-self.alpha - 1.0)
        ln = np.log(H + self.h_shift)
        return (ln - 1.0) / ln**2

    def invert(self, w):
        """H with V(H) = w, after clamping w into the admissible image."""
        w = self.clamp_V(np.asarray(w, dtype=float))
        if self.kind == "mcf":
            return w
        if self.kind == "imcf":
            return -1.0 / w
        if self.kind == "power_mcf":
            return w ** (1.0 / self.alpha)
        if self.kind == "power_imcf":
            return (-w) ** (-1.0 / self.alpha)
        return self._invert_log(w)

    def _invert_log(self, w):
        """Safeguarded Newton for the logarithmic law, |V(H)-w| <= 1e-13."""
        scalar = np.isscalar(w) or np.ndim(w) == 0
        w = np.atleast_1d(np.asarray(w, dtype=float))
        lo = np.full_like(w, self.h_lo)
        hi = np.full_like(w, self.h_hi)
        H = 0.5 * (lo + hi)
        for _ in range(200):
            f = self._V_raw(H) - w
            done = np.abs(f) <= 1e-13 * np.maximum(1.0, np.abs(w))
            if done.all():
                break
            hi = np.where(f > 0, H, hi)
            lo = np.where(f < 0, H, lo)
            step = f / self.dV(H)
            Hn = H - step
            outside = (Hn <= lo) | (Hn >= hi)
            H = np.where(outside, 0.5 * (lo + hi), Hn)
        return float(H[0]) if scalar else H

    def clamp_count(self, V_nodal) -> int:
        """Number of nodal velocity values outside the admissible image."""
        lo, hi = self.image
        V_nodal = np.asarray(V_nodal)
        return int(np.count_nonzero((V_nodal < lo) | (V_nodal > hi)))


def make_flow(kind: str, alpha: float = 1.0, h_shift: float = 0.0,
              h_lo: float = 1e-3, h_hi: float = 1e3) -> FlowLaw:
    return FlowLaw(kind=kind, alpha=alpha, h_shift=h_shift, h_lo=h_lo, h_hi=h_hi)


def mcf(**kw) -> FlowLaw:
    return FlowLaw("mcf", **kw)


def imcf(**kw) -> FlowLaw:
    return FlowLaw("imcf", **kw)


def power_mcf(alpha: float, **kw) -> FlowLaw:
    return FlowLaw("power_mcf", alpha=alpha, **kw)


def power_imcf(alpha: float, **kw) -> FlowLaw:
    return FlowLaw("power_imcf", alpha=alpha, **kw)


def log_mcf(h_shift: float, **kw) -> FlowLaw:
    return FlowLaw("log_mcf", h_shift=h_shift, **kw)
