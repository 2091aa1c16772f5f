"""Homogeneous group arithmetic.

A group is identified with R^n in exponential coordinates; the product and
inverse are stored as explicit monomial tables, dilations act diagonally with
weights sigma_j, and left-invariant vector fields are polynomial-coefficient
first-order operators. Built-ins: abelian R^n and the first Heisenberg group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss_legendre, trapezoid_circle


class DimensionMismatchError(ValueError):
    pass


# A monomial table is a tuple of terms (coef, x_exponents, y_exponents);
# y_exponents is empty for single-argument polynomials.


@dataclass(frozen=True)
class GroupSpec:
    """Immutable description of a homogeneous group in global coordinates."""

    name: str
    n: int
    weights: tuple          # dilation weights, ascending, sigma_j >= 1
    law: tuple              # law[k] = monomial table of Q_k(x, y); product_k = x_k + y_k + Q_k
    inv: tuple              # inv[k] = monomial table of q_k(x); inverse_k = -x_k + q_k
    jac: tuple              # jac[j][k] = monomial table of a_k^{(j)}(x); a_j^{(j)} = 1 implied
    nu_default: int = 2
    rho: float = 1.0        # quasi-triangle constant of the default quasi-norm
    norm_variant: str = "max"

    @property
    def Q(self) -> float:
        return float(sum(self.weights))

    @property
    def is_abelian(self) -> bool:
        return all(len(t) == 0 for t in self.law)

    def __post_init__(self):
        if len(self.weights) != self.n:
            raise ValueError("weights length must equal dimension")
        if any(w < 1 for w in self.weights):
            raise ValueError("dilation weights must be >= 1")
        if list(self.weights) != sorted(self.weights):
            raise ValueError("weights must be ascending")


def _check_dim(g: GroupSpec, x: np.ndarray):
    if x.shape[-1] != g.n:
        raise DimensionMismatchError(
            f"point has dimension {x.shape[-1]}, group {g.name} has {g.n}")


def _eval_monomials(table, x, y=None):
    """Evaluate a monomial table at broadcastable coordinate arrays."""
    if not table:
        return 0.0
    out = 0.0
    for coef, ax, ay in table:
        term = np.full(x.shape[:-1], coef, dtype=float)
        for i, e in enumerate(ax):
            if e:
                term = term * x[..., i] ** e
        if y is not None:
            for i, e in enumerate(ay):
                if e:
                    term = term * y[..., i] ** e
        out = out + term
    return out


def identity(g: GroupSpec) -> np.ndarray:
    return np.zeros(g.n)


def multiply(g: GroupSpec, x, y) -> np.ndarray:
    """Group product x . y (vectorized over leading axes)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dim(g, x)
    _check_dim(g, y)
    x, y = np.broadcast_arrays(x, y)
    out = x + y
    for k in range(g.n):
        if g.law[k]:
            out = out.copy() if out.base is not None else out
            out[..., k] = out[..., k] + _eval_monomials(g.law[k], x, y)
    return out


def inverse(g: GroupSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    out = -x
    for k in range(g.n):
        if g.inv[k]:
            out[..., k] = out[..., k] + _eval_monomials(g.inv[k], x)
    return out


def dilate(g: GroupSpec, lam: float, x) -> np.ndarray:
    """Anisotropic dilation: coordinate j scales by lam**sigma_j."""
    if lam <= 0:
        raise ValueError("dilation parameter must be positive")
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    scale = np.array([lam ** s for s in g.weights])
    return x * scale


def quasi_norm(g: GroupSpec, x, variant: str | None = None) -> np.ndarray:
    """Homogeneous quasi-norm; variants: 'max', 'sum', 'euclidean' (abelian)."""
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    v = variant or g.norm_variant
    if v == "euclidean":
        if not g.is_abelian or any(w != 1 for w in g.weights):
            raise ValueError("euclidean variant only for abelian groups")
        return np.sqrt(np.sum(x * x, axis=-1))
    comps = np.stack([np.abs(x[..., j]) ** (1.0 / g.weights[j]) for j in range(g.n)], axis=-1)
    if v == "max":
        return np.max(comps, axis=-1)
    if v == "sum":
        return np.sum(comps, axis=-1)
    raise ValueError(f"unknown quasi-norm variant {v!r}")


def vf_coeffs(g: GroupSpec, j: int, x) -> np.ndarray:
    """Coefficient vector (a_1,...,a_n) of the j-th left-invariant field at x.

    a_k^{(j)} = 0 for k < j, a_j^{(j)} = 1, polynomial above. j is 1-based.
    """
    if not (1 <= j <= g.n):
        raise IndexError(f"vector field index {j} out of range 1..{g.n}")
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    out = np.zeros(x.shape[:-1] + (g.n,))
    out[..., j - 1] = 1.0
    for k in range(g.n):
        tab = g.jac[j - 1][k]
        if tab:
            out[..., k] = out[..., k] + _eval_monomials(tab, x)
    return out


# --------------------------------------------------------------------------
# Built-in groups
# --------------------------------------------------------------------------


def euclidean_group(n: int) -> GroupSpec:
    empty = tuple(() for _ in range(n))
    jac = tuple(tuple(() for _ in range(n)) for _ in range(n))
    return GroupSpec(
        name=f"R{n}", n=n, weights=tuple([1.0] * n), law=empty, inv=empty,
        jac=jac, nu_default=2, rho=1.0, norm_variant="euclidean",
    )


def heisenberg_group() -> GroupSpec:
    """First Heisenberg group, chart (x, y, u), weights (1, 1, 2).

    Law: (x,y,u).(x',y',u') = (x+x', y+y', u+u'+(xy'-yx')/2).
    For the max quasi-norm the triangle constant is exactly 1: the center
    component of x.y is bounded by |x|^2 + |x||y| + |y|^2 <= (|x|+|y|)^2,
    and the horizontal components by |x|+|y|. Empirical sampling agrees.
    """
    law = (
        (),
        (),
        ((0.5, (1, 0, 0), (0, 1, 0)), (-0.5, (0, 1, 0), (1, 0, 0))),
    )
    inv = ((), (), ())
    # X1 = d_x - (y/2) d_u ; X2 = d_y + (x/2) d_u ; X3 = d_u
    jac = (
        ((), (), ((-0.5, (0, 1, 0), ()),)),
        ((), (), ((0.5, (1, 0, 0), ()),)),
        ((), (), ()),
    )
    return GroupSpec(
        name="H1", n=3, weights=(1.0, 1.0, 2.0), law=law, inv=inv, jac=jac,
        nu_default=2, rho=1.0, norm_variant="max",
    )


BUILTIN_GROUPS = {"R1": lambda: euclidean_group(1), "R2": lambda: euclidean_group(2),
                  "R3": lambda: euclidean_group(3), "H1": heisenberg_group}


def get_group(name: str) -> GroupSpec:
    if name in BUILTIN_GROUPS:
        return BUILTIN_GROUPS[name]()
    if name.startswith("R") and name[1:].isdigit():
        return euclidean_group(int(name[1:]))
    raise KeyError(f"unknown group {name!r}")


# --------------------------------------------------------------------------
# Polar quadrature over quasi-norm balls
# --------------------------------------------------------------------------


def _max_sphere_nodes(g: GroupSpec, n_face: int):
    """Nodes/weights on the unit sphere of the max quasi-norm.

    That sphere is the boundary of the coordinate box [-1,1]^n; on the faces
    |omega_j| = 1 the surface measure induced by the dilation-polar
    decomposition is sigma_j times Lebesgue measure of the face.
    """
    x, w = gauss_legendre(n_face)
    nodes = []
    weights = []
    for j in range(g.n):
        rest = [i for i in range(g.n) if i != j]
        if rest:
            grids = np.meshgrid(*([x] * len(rest)), indexing="ij")
            wgrids = np.meshgrid(*([w] * len(rest)), indexing="ij")
            face_pts = np.stack([q.ravel() for q in grids], axis=-1)
            face_w = np.ones(face_pts.shape[0])
            for q in wgrids:
                face_w = face_w * q.ravel()
        else:
            face_pts = np.zeros((1, 0))
            face_w = np.ones(1)
        for sgn in (-1.0, 1.0):
            pts = np.zeros((face_pts.shape[0], g.n))
            pts[:, j] = sgn
            for idx, i in enumerate(rest):
                pts[:, i] = face_pts[:, idx]
            nodes.append(pts)
            weights.append(g.weights[j] * face_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _euclid_sphere_nodes(n: int, m: int):
    if n == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if n == 2:
        theta, w = trapezoid_circle(m)
        return np.column_stack([np.cos(theta), np.sin(theta)]), w
    if n == 3:
        xc, wc = gauss_legendre(m)
        theta, wt = trapezoid_circle(2 * m)
        ct, th = np.meshgrid(xc, theta, indexing="ij")
        wgt = np.outer(wc, wt).ravel()
        st = np.sqrt(1.0 - ct ** 2)
        pts = np.column_stack([(st * np.cos(th)).ravel(), (st * np.sin(th)).ravel(), ct.ravel()])
        return pts, wgt
    raise NotImplementedError("euclidean sphere rule implemented for n <= 3")


def polar_quadrature(g: GroupSpec, r_max: float, n_radial: int = 24,
                     n_angular: int = 24, variant: str | None = None,
                     r_min: float = 0.0):
    """Nodes and weights approximating integrals over the quasi-ball B(r_max).

    Points are placed along dilation rays through a mesh of the unit
    quasi-sphere, with the radial factor r^{Q-1}; for smooth integrands the
    rule converges at Gauss rates. With ``r_min > 0`` the shell
    r_min < |y| < r_max is covered instead.
    """
    if r_max <= 0 or r_min < 0 or r_min >= r_max:
        raise ValueError("need 0 <= r_min < r_max")
    v = variant or g.norm_variant
    if v == "euclidean":
        sph, sw = _euclid_sphere_nodes(g.n, n_angular)
        Qh = float(g.n)
    elif v == "max":
        sph, sw = _max_sphere_nodes(g, n_angular)
        Qh = g.Q
    else:
        raise NotImplementedError("polar quadrature supports 'max' and 'euclidean'")
    xr, wr = gauss_legendre(n_radial)
    r = 0.5 * (r_max + r_min) + 0.5 * (r_max - r_min) * xr
    wrad = 0.5 * (r_max - r_min) * wr * r ** (Qh - 1.0)
    if v == "euclidean":
        pts = r[:, None, None] * sph[None, :, :]
    else:
        scale = np.stack([r ** s for s in g.weights], axis=-1)  # (n_r, n)
        pts = scale[:, None, :] * sph[None, :, :]
    wgt = wrad[:, None] * sw[None, :]
    return pts.reshape(-1, g.n), wgt.ravel()


def ball_volume(g: GroupSpec, r: float, variant: str | None = None,
                n_radial: int = 24, n_angular: int = 24) -> float:
    pts, w = polar_quadrature(g, r, n_radial, n_angular, variant)
    return float(np.sum(w))


# --------------------------------------------------------------------------
# Plain-text serialization
# --------------------------------------------------------------------------
#
# Grammar (one statement per line, '#' comments allowed):
#   group <name>
#   dim <n>
#   weights <s1> ... <sn>
#   nu <int>
#   rho <float>
#   normvariant <max|sum|euclidean>
#   law <k>: <coef> x<e1,...,en> y<e1,...,en> [; ...]     (the Q_k part only)
#   inv <k>: <coef> x<e1,...,en> [; ...]
#   vf <j> <k>: <coef> x<e1,...,en> [; ...]               (a_k^{(j)}, k > j)
# Components not listed have empty tables. Indices are 1-based.


def _fmt_exps(tag, exps):
    return f"{tag}{','.join(str(int(e)) for e in exps)}"


def _fmt_table(table, with_y):
    parts = []
    for coef, ax, ay in table:
        s = f"{coef!r} {_fmt_exps('x', ax)}"
        if with_y:
            s += f" {_fmt_exps('y', ay)}"
        parts.append(s)
    return " ; ".join(parts)


def spec_to_text(g: GroupSpec) -> str:
    lines = [f"group {g.name}", f"dim {g.n}",
             "weights " + " ".join(repr(float(w)) for w in g.weights),
             f"nu {g.nu_default}", f"rho {g.rho!r}", f"normvariant {g.norm_variant}"]
    for k in range(g.n):
        if g.law[k]:
            lines.append(f"law {k + 1}: " + _fmt_table(g.law[k], with_y=True))
    for k in range(g.n):
        if g.inv[k]:
            lines.append(f"inv {k + 1}: " + _fmt_table(g.inv[k], with_y=False))
    for j in range(g.n):
        for k in range(g.n):
            if g.jac[j][k]:
                lines.append(f"vf {j + 1} {k + 1}: " + _fmt_table(g.jac[j][k], with_y=False))
    return "\n".join(lines) + "\n"


def _parse_exps(tok, n):
    exps = tuple(int(p) for p in tok[1:].split(",")) if len(tok) > 1 else ()
    if exps and len(exps) != n:
        raise ValueError(f"exponent list {tok!r} has wrong length")
    return exps


def _parse_terms(body, n, with_y):
    table = []
    for chunk in body.split(";"):
        toks = chunk.split()
        if not toks:
            continue
        coef = float(toks[0])
        ax = _parse_exps(toks[1], n)
        ay = _parse_exps(toks[2], n) if with_y else ()
        table.append((coef, ax, ay))
    return tuple(table)


def spec_from_text(text: str) -> GroupSpec:
    name = None
    n = None
    weights = None
    nu = 2
    rho = 1.0
    variant = "max"
    law = {}
    inv = {}
    jac = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, body = line.partition(" ")
        if key == "group":
            name = body.strip()
        elif key == "dim":
            n = int(body)
        elif key == "weights":
            weights = tuple(float(t) for t in body.split())
        elif key == "nu":
            nu = int(body)
        elif key == "rho":
            rho = float(body)
        elif key == "normvariant":
            variant = body.strip()
        elif key in ("law", "inv", "vf"):
            head, _, terms = body.partition(":")
            idx = tuple(int(t) for t in head.split())
            if key == "law":
                law[idx[0] - 1] = _parse_terms(terms, n, with_y=True)
            elif key == "inv":
                inv[idx[0] - 1] = _parse_terms(terms, n, with_y=False)
            else:
                jac[(idx[0] - 1, idx[1] - 1)] = _parse_terms(terms, n, with_y=False)
        else:
            raise ValueError(f"unknown statement {key!r} in group config")
    if name is None or n is None or weights is None:
        raise ValueError("group config must declare group, dim and weights")
    law_t = tuple(law.get(k, ()) for k in range(n))
    inv_t = tuple(inv.get(k, ()) for k in range(n))
    jac_t = tuple(tuple(jac.get((j, k), ()) for k in range(n)) for j in range(n))
    return GroupSpec(name=name, n=n, weights=weights, law=law_t, inv=inv_t,
                     jac=jac_t, nu_default=nu, rho=rho, norm_variant=variant)
