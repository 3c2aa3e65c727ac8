"""Piecewise-linear change of time variable pinning a reference instant to tau.

The reference interval ``[0, 2]`` is split into ``[0, 1]``, ``[1, 1 + eps_ref]``
and ``[1 + eps_ref, 2]``; these are mapped affinely onto ``[0, tau]``,
``[tau, tau + eps]`` and ``[tau + eps, T]``.  With ``eps = eps_ref = 0`` the
middle segment disappears.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WarpParams:
    T: float
    tau: float
    eps: float = 0.0
    eps_ref: float = 0.0

    def __post_init__(self):
        if (self.eps == 0.0) != (self.eps_ref == 0.0):
            raise ValueError("eps and eps_ref must vanish together")
        if self.eps < 0 or not (0.0 <= self.eps_ref < 1.0):
            raise ValueError("need eps >= 0 and 0 <= eps_ref < 1")
        if not (0.0 < self.tau and self.tau + self.eps < self.T):
            raise ValueError(f"tau={self.tau} must satisfy 0 < tau and tau + eps < T")

    def with_tau(self, tau):
        return WarpParams(self.T, tau, self.eps, self.eps_ref)

    @property
    def breakpoints_s(self):
        return np.array([0.0, 1.0, 1.0 + self.eps_ref, 2.0])

    @property
    def breakpoints_t(self):
        return np.array([0.0, self.tau, self.tau + self.eps, self.T])

    def slopes(self):
        """``d mu / ds`` on the three segments (middle is 0 when degenerate)."""
        mid = self.eps / self.eps_ref if self.eps_ref > 0 else 0.0
        return np.array([self.tau, mid, (self.T - self.tau - self.eps) / (1.0 - self.eps_ref)])

    def tau_slopes(self):
        """``d^2 mu / ds dtau`` on the three segments; independent of tau."""
        return np.array([1.0, 0.0, -1.0 / (1.0 - self.eps_ref)])


def _segment(s, p: WarpParams, side="left"):
    s = np.asarray(s, dtype=float)
    if p.eps_ref == 0.0:
        after = (s > 1.0) if side == "left" else (s >= 1.0)
        return np.where(after, 2, 0)
    find = "left" if side == "left" else "right"
    return np.clip(np.searchsorted(p.breakpoints_s, s, side=find) - 1, 0, 2)


def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > 2.0) or not np.all(np.isfinite(s)):
        raise ValueError("s must lie in [0, 2]")
    return s


def mu(s, p: WarpParams):
    """Physical time of reference time ``s``."""
    s = _check_s(s)
    out = np.interp(s, p.breakpoints_s, p.breakpoints_t)
    # exact pinned values, free of interpolation rounding
    out = np.where(s == 1.0, p.tau, out)
    out = np.where(s == 2.0, p.T, out)
    return out if out.ndim else float(out)


def mu_inverse(t, p: WarpParams):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > p.T):
        raise ValueError("t must lie in [0, T]")
    bt, bs = p.breakpoints_t, p.breakpoints_s
    if p.eps == 0.0:
        bt, bs = bt[[0, 1, 3]], bs[[0, 1, 3]]
    out = np.interp(t, bt, bs)
    return out if out.ndim else float(out)


def mu_dot(s, p: WarpParams, side="left"):
    """``d mu / ds``; at kinks the one-sided value selected by ``side``."""
    s = _check_s(s)
    out = p.slopes()[_segment(s, p, side)]
    return out if np.ndim(out) else float(out)


def mu_dot_tau(s, p: WarpParams, side="left"):
    s = _check_s(s)
    out = p.tau_slopes()[_segment(s, p, side)]
    return out if np.ndim(out) else float(out)


def eulerian_weight(t, p: WarpParams):
    """``mu_dot_tau`` composed with the inverse warp, as a function of physical time.

    Equals 1 before tau, 0 inside ``(tau, tau + eps)``, and
    ``-1 / (1 - eps_ref)`` after ``tau + eps``; left values at the kinks.
    """
    t = np.asarray(t, dtype=float)
    w_after = -1.0 / (1.0 - p.eps_ref)
    out = np.where(t <= p.tau, 1.0, np.where(t <= p.tau + p.eps, 0.0, w_after))
    if p.eps == 0.0:
        out = np.where(t <= p.tau, 1.0, w_after)
    return out if out.ndim else float(out)


def weight_segments(p: WarpParams, per_unit_time=False):
    """List of ``(t_start, t_end, weight)`` for the Eulerian weight.

    With ``per_unit_time`` each weight is divided by the warp speed
    ``mu_dot`` of its segment, i.e. ``(mu_dot_tau / mu_dot) o mu^-1``; this is
    the density that turns an integral over ``s`` into one over ``t``.
    """
    w = p.tau_slopes()
    if per_unit_time:
        speed = p.slopes()
        w = np.array([w[0] / speed[0], 0.0, w[2] / speed[2]])
    segs = [(0.0, p.tau, float(w[0]))]
    if p.eps > 0:
        segs.append((p.tau, p.tau + p.eps, 0.0))
    segs.append((p.tau + p.eps, p.T, float(w[2])))
    return segs


def weight_integral(p: WarpParams):
    return p.tau - (p.T - p.tau - p.eps) / (1.0 - p.eps_ref)


def interval_weights(times, p: WarpParams, per_unit_time=False):
    """Average Eulerian weight over each interval ``[times[k], times[k+1]]``.

    Segments are integrated exactly, so intervals containing a kink receive
    the length-weighted mix of the adjacent values.
    """
    a, b = times[:-1], times[1:]
    acc = np.zeros_like(a)
    for t0, t1, w in weight_segments(p, per_unit_time):
        overlap = np.clip(np.minimum(b, t1) - np.maximum(a, t0), 0.0, None)
        acc += w * overlap
    return acc / (b - a)


def remap_control(xi, times, p_from: WarpParams, p_to: WarpParams):
    """Re-express a step-wise control when tau changes with the warped control fixed.

    The control ``xi`` (shape ``(steps, ...)``, constant on each interval of
    ``times``) is composed with ``mu_from o mu_to^{-1}`` and averaged back onto
    the same intervals.  The averaging is exact for the piecewise-constant
    input, so the map is the identity when ``p_from == p_to``.
    """
    xi = np.asarray(xi, dtype=float)
    if p_from == p_to:
        return xi.copy()
    flat = xi.reshape(xi.shape[0], -1)
    dt = np.diff(times)
    cum = np.vstack([np.zeros((1, flat.shape[1])), np.cumsum(flat * dt[:, None], axis=0)])

    def primitive(t):
        return np.stack([np.interp(t, times, cum[:, j]) for j in range(flat.shape[1])], axis=-1)

    kinks = [p_to.tau, p_to.tau + p_to.eps]
    pts = np.union1d(times, [k for k in kinks if times[0] < k < times[-1]])
    psi = mu(mu_inverse(pts, p_to), p_from)
    Pp = primitive(psi)
    dpsi = np.diff(psi)
    dpts = np.diff(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dpsi[:, None] > 0, (Pp[1:] - Pp[:-1]) / dpsi[:, None], 0.0)
    piece = ratio * dpts[:, None]
    owner = np.searchsorted(times, pts[:-1], side="right") - 1
    out = np.zeros_like(flat)
    np.add.at(out, owner, piece)
    out /= dt[:, None]
    return out.reshape(xi.shape)
