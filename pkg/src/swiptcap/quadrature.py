"""Adaptive composite Gauss-Legendre quadrature.

Panels carry a 15-point rule. A panel is accepted when the rule on the
whole panel and the sum of the rules on its two halves agree to within the
panel's share of the absolute tolerance; otherwise it is bisected. The
integrand is evaluated on all active panels at once, and may be
vector-valued (return shape ``(n, k)`` for ``n`` nodes).
"""

import numpy as np

NODES, WEIGHTS = np.polynomial.legendre.leggauss(15)


class QuadratureError(RuntimeError):
    """Raised when the panel budget is exhausted before convergence."""

    def __init__(self, message, *, panels, error, interval):
        super().__init__(f"{message} (panels={panels}, error={error:.3e}, interval={interval})")
        self.panels = panels
        self.error = error
        self.interval = interval


def _rule(func, left, right):
    """15-point rule on each panel [left_j, right_j]; returns (npanel, ...)."""
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
    fx = np.asarray(func(x), dtype=float)
    fx = fx.reshape((left.size, NODES.size) + fx.shape[1:])
    w = (half[:, None] * WEIGHTS[None, :]).reshape((left.size, NODES.size) + (1,) * (fx.ndim - 2))
    return np.sum(fx * w, axis=1)


def integrate(func, a, b, tol=1e-9, max_panels=10_000, panel_width=1.0):
    """Integrate ``func`` over [a, b].

    Parameters
    ----------
    func : callable
        Vectorised integrand, ``func(x)`` with ``x`` a 1-D array.
    a, b : float
        Finite limits, ``a <= b``.
    tol : float
        Absolute tolerance on the total (max over components).
    max_panels : int
        Cap on the number of accepted plus active panels.
    panel_width : float
        Width of the initial uniform partition.

    Returns
    -------
    value, error : float or ndarray, float
    """
    a, b = float(a), float(b)
    if not (np.isfinite(a) and np.isfinite(b)) or b < a:
        raise ValueError(f"invalid interval [{a}, {b}]")
    if b == a:
        probe = np.asarray(func(np.array([a])), dtype=float)
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0, 0.0

    n0 = max(1, int(np.ceil((b - a) / panel_width)))
    edges = np.linspace(a, b, n0 + 1)
    left, right = edges[:-1], edges[1:]
    # first round: whole panels and both halves in a single integrand call
    mid = 0.5 * (left + right)
    first = _rule(func, np.concatenate([left, left, mid]), np.concatenate([right, mid, right]))
    coarse, pre_lo, pre_hi = first[:n0], first[n0 : 2 * n0], first[2 * n0 :]
    total = np.zeros(coarse.shape[1:])
    error = 0.0
    accepted = 0
    length = b - a

    while left.size:
        mid = 0.5 * (left + right)
        if pre_lo is not None:
            lo, hi, pre_lo = pre_lo, pre_hi, None
        else:
            n = left.size
            both = _rule(func, np.concatenate([left, mid]), np.concatenate([mid, right]))
            lo, hi = both[:n], both[n:]
        fine = lo + hi
        diff = np.abs(fine - coarse)
        if diff.ndim > 1:
            diff = diff.reshape(diff.shape[0], -1).max(axis=1)
        ok = diff <= tol * (right - left) / length
        # panels too narrow to bisect further are accepted as they are
        ok |= (right - left) < 1e-12 * max(1.0, length)
        total = total + fine[ok].sum(axis=0)
        error += float(diff[ok].sum())
        accepted += int(ok.sum())
        bad = ~ok
        if accepted + 2 * int(bad.sum()) > max_panels:
            raise QuadratureError(
                "adaptive quadrature did not converge",
                panels=accepted + 2 * int(bad.sum()),
                error=error + float(diff[bad].sum()),
                interval=(a, b),
            )
        left = np.concatenate([left[bad], mid[bad]])
        right = np.concatenate([mid[bad], right[bad]])
        coarse = np.concatenate([lo[bad], hi[bad]])

    if total.ndim == 0:
        return float(total), error
    return total, error
