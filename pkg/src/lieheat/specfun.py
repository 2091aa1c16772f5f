"""Special functions: shared Lanczos gamma, regularized Kummer function,
the heat-tail integral psi, and the explicit Euclidean square-function kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import ConvergenceError, graded_panels, panel_rule, power_endpoint_rule

# Lanczos approximation, g = 607/128, 15 terms (relative error ~ 1e-15 on the
# positive real axis). One shared implementation backs every Gamma evaluation
# in the package.
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_C = np.array([
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    3.3994649984811888699e-5,
    4.6523628927048575665e-5,
    -9.8374475304879564677e-5,
    1.5808870322491248884e-4,
    -2.1026444172410488319e-4,
    2.1743961811521264320e-4,
    -1.6431810653676389022e-4,
    8.4418223983852743293e-5,
    -2.6190838401581408670e-5,
    3.6899182659531622704e-6,
])

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def gammafn(x: float) -> float:
    """Gamma(x) for real x (poles at non-positive integers raise)."""
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise ValueError(f"gamma pole at x={x}")
    if x < 0.5:
        # reflection
        return math.pi / (math.sin(math.pi * x) * gammafn(1.0 - x))
    z = x - 1.0
    s = _LANCZOS_C[0]
    for k in range(1, len(_LANCZOS_C)):
        s += _LANCZOS_C[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _SQRT_2PI * t ** (z + 0.5) * math.exp(-t) * s


def rgamma(x: float) -> float:
    """1/Gamma(x); zero at the poles (entire)."""
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        return 0.0
    return 1.0 / gammafn(x)


# --------------------------------------------------------------------------
# Regularized confluent hypergeometric function phi(a, b; z) = M(a,b,z)/Gamma(b)
# --------------------------------------------------------------------------

_SERIES_SWITCH = 40.0
_MAX_TERMS = 400


def _kummer_series(a: float, b: float, z: float) -> float:
    """Direct series sum_k (a)_k / Gamma(b+k) z^k / k!."""
    term = rgamma(b)
    total = term
    poch = 1.0
    fact = 1.0
    zk = 1.0
    for k in range(1, _MAX_TERMS):
        poch *= a + (k - 1)
        fact *= k
        zk *= z
        term = poch * rgamma(b + k) * zk / fact
        total += term
        if abs(term) <= 1e-17 * max(1e-300, abs(total)) and k > 4:
            return total
    raise ConvergenceError("Kummer series did not converge")


def _kummer_asymptotic_neg(a: float, b: float, z: float) -> float:
    """phi(a,b;z) for z -> -inf: x^{-a}/Gamma(b-a) * sum (a)_k (a-b+1)_k / (k! x^k)."""
    x = -z
    pref = x ** (-a) * rgamma(b - a)
    if pref == 0.0:
        return 0.0
    term = 1.0
    total = term
    best = abs(term)
    for k in range(1, 60):
        term *= (a + k - 1) * (a - b + k) / (k * x)
        if abs(term) > best:
            break  # divergent tail reached
        best = abs(term)
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    return pref * total


def kummer_reg(a: float, b: float, z: float) -> float:
    """Regularized Kummer function for real parameters and z <= 0.

    Entire in a and b. For moderately large |z| the Kummer transformation
    e^z phi(b-a, b; -z) gives an all-positive series; beyond the switch
    threshold the large-argument expansion is used.
    """
    a = float(a)
    b = float(b)
    z = float(z)
    if z > 0:
        raise ValueError("kummer_reg implemented for z <= 0")
    if z == 0.0:
        return rgamma(b)
    if -z <= 1.0:
        return _kummer_series(a, b, z)
    if -z <= _SERIES_SWITCH:
        if b - a > 0:
            ez = math.exp(z)
            if ez == 0.0:
                raise OverflowError("underflow in Kummer transformation")
            return ez * _kummer_series(b - a, b, -z)
        return _kummer_series(a, b, z)
    return _kummer_asymptotic_neg(a, b, z)


# --------------------------------------------------------------------------
# psi: the heat-tail integral with algebraic endpoint singularities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PsiParams:
    """Parameters of the heat-tail integral.

    alpha in (0,1), alpha + beta - 1 > 0, nu >= 2, c > 0.
    """

    alpha: float
    beta: float
    nu: float = 2.0
    c: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.alpha + self.beta - 1.0 <= 0.0:
            raise ValueError("alpha + beta - 1 must be positive")
        if self.nu < 2.0:
            raise ValueError("nu must be >= 2")
        if self.c <= 0.0:
            raise ValueError("c must be positive")


def _psi_u_form(p: PsiParams, r: float, levels: int, n_nodes: int) -> float:
    """int_0^1 u^{a+b-2} (1-u)^{-a} exp(-kappa u^{1/(nu-1)}) du."""
    kappa = p.c * r ** (p.nu / (p.nu - 1.0))
    expo = 1.0 / (p.nu - 1.0)

    def integrand_smooth(u):
        return np.exp(-kappa * u ** expo)

    # lower half: singularity u^{a+b-2}; power substitution handles it exactly
    u_lo, w_lo = power_endpoint_rule(p.alpha + p.beta - 2.0, 0.5, levels, n_nodes)
    lower = np.sum(w_lo * (1.0 - u_lo) ** (-p.alpha) * integrand_smooth(u_lo))
    # upper half: singularity (1-u)^{-a}; substitute w = 1-u
    w_nodes, w_w = power_endpoint_rule(-p.alpha, 0.5, levels, n_nodes)
    u_hi = 1.0 - w_nodes
    upper = np.sum(w_w * u_hi ** (p.alpha + p.beta - 2.0) * integrand_smooth(u_hi))
    return float(lower + upper)


def psi(p: PsiParams, r: float, rel_tol: float = 1e-11) -> float:
    """Value of the heat-tail integral at radius r >= 0.

    Computed from the u-substituted form; dyadic grading resolves every scale
    of the exponential factor so accuracy is uniform in r, and the endpoint
    singularities are integrated exactly on the closing panels.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    ladder = [(28, 10), (40, 14), (56, 20), (72, 28)]
    prev = _psi_u_form(p, r, *ladder[0])
    for levels, nodes in ladder[1:]:
        cur = _psi_u_form(p, r, levels, nodes)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise ConvergenceError(f"psi quadrature stalled at delta {abs(cur - prev):.3e}")


def psi_timeform(p: PsiParams, r: float, levels: int = 40, n_nodes: int = 16) -> float:
    """Same integral in its original time parametrization over (1, inf).

    Kept as an independent route for cross-checking `psi`.
    """
    kappa = p.c * r ** (p.nu / (p.nu - 1.0))
    expo = 1.0 / (p.nu - 1.0)

    def g(t):
        return t ** (-p.beta) * np.exp(-kappa / t ** expo)

    # t = 1 + w; near-edge singularity w^{-alpha} on (0, 1]
    w_nodes, ww = power_endpoint_rule(-p.alpha, 1.0, levels, n_nodes)
    near = np.sum(ww * g(1.0 + w_nodes))
    # w in (1, inf): substitute w = 1/s. Then dw (t-1)^{-alpha} t^{-beta}
    # = s^{alpha+beta-2} (1+s)^{-beta} ds with the algebraic endpoint at
    # s = 0 handled by the same power rule.
    s_nodes, ws = power_endpoint_rule(p.alpha + p.beta - 2.0, 1.0, levels, n_nodes)
    t = 1.0 + 1.0 / s_nodes
    far = np.sum(ws * (1.0 + s_nodes) ** (-p.beta) * np.exp(-kappa / t ** expo))
    return float(near + far)


def psi_at_zero(p: PsiParams) -> float:
    """Closed form at r = 0: Beta(alpha+beta-1, 1-alpha)."""
    return gammafn(p.alpha + p.beta - 1.0) * gammafn(1.0 - p.alpha) / gammafn(p.beta)


def psi_kummer(p: PsiParams, r: float) -> float:
    """nu = 2 closed form through the regularized Kummer function."""
    if p.nu != 2.0:
        raise ValueError("Kummer route requires nu = 2")
    return (gammafn(p.alpha + p.beta - 1.0) * gammafn(1.0 - p.alpha)
            * kummer_reg(p.alpha + p.beta - 1.0, p.beta, -p.c * r * r))


# --------------------------------------------------------------------------
# Explicit Euclidean kernel of the square function: two independent routes
# --------------------------------------------------------------------------


def phi_alpha_euclidean(n: int, alpha: float, r):
    """Euclidean square-function kernel at radius r (Kummer route).

    (4 pi)^{-n/2} [ (n/2) Gamma(alpha+n/2) phi(alpha+n/2, n/2+1; -r^2/4)
                    - Gamma(alpha+1+n/2) (r^2/4) phi(alpha+n/2+1, n/2+2; -r^2/4) ]
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    rr = np.atleast_1d(r)
    z = -rr * rr / 4.0
    g1 = gammafn(alpha + n / 2.0)
    g2 = gammafn(alpha + 1.0 + n / 2.0)
    out = np.empty_like(rr)
    for i, zi in enumerate(z):
        out[i] = (4.0 * math.pi) ** (-n / 2.0) * (
            (n / 2.0) * g1 * kummer_reg(alpha + n / 2.0, n / 2.0 + 1.0, zi)
            - g2 * (-zi) * kummer_reg(alpha + n / 2.0 + 1.0, n / 2.0 + 2.0, zi)
        )
    return float(out[0]) if scalar else out


def phi_alpha_euclidean_direct(n: int, alpha: float, r: float,
                               levels: int = 40, n_nodes: int = 16) -> float:
    """Independent route: quadrature of the time-derivative representation

    -(1/Gamma(1-alpha)) int_1^inf  d/dt[(4 pi t)^{-n/2} e^{-r^2/4t}] (t-1)^{-alpha} dt.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")

    def dh_dt(t):
        t = np.asarray(t, dtype=float)
        return ((4.0 * math.pi) ** (-n / 2.0) * np.exp(-r * r / (4.0 * t))
                * ((r * r / 4.0) * t ** (-n / 2.0 - 2.0)
                   - (n / 2.0) * t ** (-n / 2.0 - 1.0)))

    # near edge t = 1+w with w^{-alpha}
    w_nodes, ww = power_endpoint_rule(-alpha, 1.0, levels, n_nodes)
    near = np.sum(ww * dh_dt(1.0 + w_nodes))
    # tail t in (2, inf): map t = 2/s, s in (0,1]. The transformed integrand
    # behaves like s^{n/2-1+alpha} at s = 0; peel that power off for the rule.
    q = n / 2.0 - 1.0 + alpha
    s, ws = power_endpoint_rule(q, 1.0, levels, n_nodes)
    t = 2.0 / s
    far = np.sum(ws * dh_dt(t) * (t - 1.0) ** (-alpha) * (2.0 / s ** 2) * s ** (-q))
    return float(-(near + far) / gammafn(1.0 - alpha))
