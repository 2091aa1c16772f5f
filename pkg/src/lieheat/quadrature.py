"""Deterministic quadrature building blocks.

Everything here returns explicit node/weight arrays so that callers can
vectorize integrand evaluation and so that repeated runs are bit-identical.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when an adaptive rule fails to meet its tolerance within budget."""


@lru_cache(maxsize=64)
def gauss_legendre(n: int):
    """Nodes/weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def panel_rule(panels, n_nodes: int):
    """Composite Gauss-Legendre rule over a list of (lo, hi) panels.

    Returns (nodes, weights) as flat arrays.
    """
    x, w = gauss_legendre(n_nodes)
    panels = np.asarray(panels, dtype=float)
    lo = panels[:, 0][:, None]
    hi = panels[:, 1][:, None]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def graded_panels(a: float, b: float, levels: int, toward: str = "left", ratio: float = 2.0):
    """Geometrically graded panels on [a, b] accumulating at one endpoint.

    With ``toward='left'`` panel edges are a + (b-a)*ratio**-k, plus a closing
    panel down to the endpoint itself so no mass is truncated.
    """
    edges = [(b - a) * ratio ** (-k) for k in range(levels + 1)]
    panels = []
    for k in range(levels):
        panels.append((edges[k + 1], edges[k]))
    panels.append((0.0, edges[levels]))
    panels = np.array(panels)
    if toward == "left":
        return np.column_stack([a + panels[:, 0], a + panels[:, 1]])
    return np.column_stack([b - panels[:, 1], b - panels[:, 0]])


def log_panel_rule(t_lo: float, t_hi: float, panels_per_decade: int = 4, n_nodes: int = 10):
    """GL panels uniform in log t on [t_lo, t_hi]; returns (t_nodes, weights for dt)."""
    if not (0 < t_lo < t_hi):
        raise ValueError("need 0 < t_lo < t_hi")
    n_dec = np.log10(t_hi / t_lo)
    n_pan = max(1, int(np.ceil(n_dec * panels_per_decade)))
    edges = np.logspace(np.log10(t_lo), np.log10(t_hi), n_pan + 1)
    u_edges = np.log(edges)
    u_panels = np.column_stack([u_edges[:-1], u_edges[1:]])
    u, wu = panel_rule(u_panels, n_nodes)
    t = np.exp(u)
    return t, wu * t  # dt = t du


def power_endpoint_rule(p: float, length: float, levels: int = 24, n_nodes: int = 12):
    """Rule for ``int_0^L u^p g(u) du`` with p > -1 and g smooth.

    Dyadic panels graded toward 0 resolve every scale of g (each panel sees
    at most a factor-2 range of u); the u^p factor is folded into the
    weights. On the closing panel [0, L 2^-levels] the substitution
    u = a v^{1/(p+1)} integrates the singularity exactly.

    Returns (u_nodes, weights) with the u^p factor included in the weights.
    """
    if p <= -1:
        raise ValueError("exponent must exceed -1")
    edges = length * 2.0 ** (-np.arange(levels + 1, dtype=float))
    panels = np.column_stack([edges[1:], edges[:-1]])
    u, wu = panel_rule(panels, n_nodes)
    w = wu * u ** p
    # closing panel [0, a]: exact power substitution
    a = edges[-1]
    q = p + 1.0
    x, wx = gauss_legendre(n_nodes)
    v = 0.5 * (x + 1.0)
    wv = 0.5 * wx
    u0 = a * v ** (1.0 / q)
    w0 = (a ** q / q) * wv
    return np.concatenate([u0, u]), np.concatenate([w0, w])


def adaptive_value(evaluate, start: int, rel_tol: float, abs_tol: float, max_level: int = 6):
    """Double a resolution parameter until successive values agree.

    ``evaluate(n)`` must be deterministic. Returns the converged value.
    """
    prev = evaluate(start)
    n = start
    for _ in range(max_level):
        n *= 2
        cur = evaluate(n)
        if abs(cur - prev) <= max(abs_tol, rel_tol * abs(cur)):
            return cur
        prev = cur
    raise ConvergenceError(
        f"quadrature did not converge (last delta {abs(cur - prev):.3e})"
    )


def trapezoid_circle(m: int):
    """Equispaced angular rule on the unit circle (spectrally accurate)."""
    theta = 2.0 * np.pi * np.arange(m) / m
    w = np.full(m, 2.0 * np.pi / m)
    return theta, w
