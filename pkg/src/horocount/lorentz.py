"""Matrix arithmetic for SO(n,1)° in the off-diagonal (light-cone) form.

Conventions
-----------
* Row vectors, right action: a vector ``w`` is moved to ``w @ g``.
* The quadratic form is ``Q(w) = w J w^T = 2 w_1 w_{n+1} - w_2^2 - ... - w_n^2``.
* ``a_s = diag(e^s, I, e^{-s})``; ``u_t`` is the unipotent block matrix with
  first row ``(1, t, |t|^2/2)``.
* The base point is ``o = (e_1 + e_{n+1}) / sqrt(2)``; the forward and backward
  endpoints of the base frame are the null lines ``[e_1]`` and ``[e_{n+1}]``.
* "Diagonal coordinates" are ``w' = w @ P^T`` where ``P J P^T = diag(-I_n, 1)``.
  ``P`` is orthogonal, so Euclidean norms agree in both coordinate systems and
  ``K = Stab(o)`` consists of orthogonal matrices.

Arrays of vectors are accepted wherever it is cheap to do so; the trailing axis
is always the coordinate axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


class GeometryError(ValueError):
    """Input violates a geometric invariant (form, orientation, nullity)."""


class FormViolation(GeometryError):
    pass


class PoleError(GeometryError):
    """Boundary point coincides with the pole of a visual map."""


@dataclass(frozen=True)
class ModelFrame:
    n: int
    J: np.ndarray
    Pdiag: np.ndarray
    o: np.ndarray
    wPlus: np.ndarray
    wMinus: np.ndarray

    @property
    def dim(self) -> int:
        return self.n + 1


@lru_cache(maxsize=None)
def frame(n: int) -> ModelFrame:
    if n < 2:
        raise ValueError("dimension n must be >= 2")
    d = n + 1
    J = np.zeros((d, d))
    J[0, -1] = J[-1, 0] = 1.0
    J[1:-1, 1:-1] = -np.eye(n - 1)
    P = np.zeros((d, d))
    P[0, 0], P[0, -1] = 1 / SQRT2, -1 / SQRT2
    P[1:-1, 1:-1] = np.eye(n - 1)
    P[-1, 0] = P[-1, -1] = 1 / SQRT2
    e = np.eye(d)
    o = e[-1] @ P
    for arr in (J, P, o):
        arr.setflags(write=False)
    return ModelFrame(n=n, J=J, Pdiag=P, o=o, wPlus=e[0].copy(), wMinus=e[-1].copy())


def dim_of(g: np.ndarray) -> int:
    return np.shape(g)[-1] - 1


def bilinear(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lorentz bilinear form B(x, y) = x J y^T, broadcast over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x[..., 0] * y[..., -1] + x[..., -1] * y[..., 0] - np.sum(x[..., 1:-1] * y[..., 1:-1], axis=-1)


def quad(x: np.ndarray) -> np.ndarray:
    return bilinear(x, x)


def to_diag(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w @ frame(w.shape[-1] - 1).Pdiag.T


def from_diag(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w @ frame(w.shape[-1] - 1).Pdiag


def time_component(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return (w[..., 0] + w[..., -1]) / SQRT2


def inverse(g: np.ndarray) -> np.ndarray:
    """Exact inverse of a form-preserving matrix, g^{-1} = J g^T J."""
    J = frame(dim_of(g)).J
    return J @ np.swapaxes(g, -1, -2) @ J


# ---------------------------------------------------------------------------
# subgroups


def u_matrix(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = t.size + 1
    g = np.eye(n + 1)
    g[0, 1:-1] = t
    g[0, -1] = 0.5 * float(t @ t)
    g[1:-1, -1] = t
    return g


def a_matrix(s: float, n: int) -> np.ndarray:
    g = np.eye(n + 1)
    g[0, 0] = np.exp(s)
    g[-1, -1] = np.exp(-s)
    return g


def m_matrix(rot) -> np.ndarray:
    rot = np.atleast_2d(np.asarray(rot, dtype=float))
    k = rot.shape[0]
    resid = np.max(np.abs(rot @ rot.T - np.eye(k)))
    if resid > 1e-10 or abs(np.linalg.det(rot) - 1.0) > 1e-10:
        raise FormViolation(f"M parameter is not in SO({k}): orthogonality residual {resid:.3e}")
    g = np.eye(k + 2)
    g[1:-1, 1:-1] = rot
    return g


def subgroup_element(kind: str, param, n: int | None = None) -> np.ndarray:
    """Block matrix of u_t, a_s or m for kind ``"U"``, ``"A"`` or ``"M"``."""
    kind = kind.upper()
    if kind == "U":
        return u_matrix(param)
    if kind == "A":
        if n is None:
            raise ValueError("kind A needs the dimension n")
        return a_matrix(float(param), n)
    if kind == "M":
        return m_matrix(param)
    raise ValueError(f"unknown subgroup kind {kind!r}")


# ---------------------------------------------------------------------------
# validation


def form_residual(g: np.ndarray) -> float:
    J = frame(dim_of(g)).J
    return float(np.max(np.abs(g @ J @ g.T - J)))


def check_element(g: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Validate a single group element; returns it as a float array."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 3:
        raise FormViolation(f"expected a square matrix of size >= 3, got shape {g.shape}")
    scale = max(1.0, max_norm(g)) ** 2
    resid = form_residual(g)
    if resid > tol * scale:
        raise FormViolation(f"g J g^T != J: residual {resid:.3e} (allowed {tol * scale:.3e})")
    det = np.linalg.det(g)
    if abs(det - 1.0) > 1e-8 * max(1.0, abs(det)):
        raise FormViolation(f"det(g) = {det:.12g}, expected 1")
    if time_component(frame(dim_of(g)).o @ g) <= 0:
        raise FormViolation("g is not orthochronous (reverses the upper light cone)")
    return g


def max_norm(g: np.ndarray) -> np.ndarray:
    """Largest absolute entry; works on stacks of matrices."""
    return np.max(np.abs(g), axis=(-2, -1))


# ---------------------------------------------------------------------------
# points


def normalize_boundary(xi: np.ndarray) -> np.ndarray:
    """Unit Euclidean representative of a null line, upper cone."""
    xi = np.asarray(xi, dtype=float)
    nrm = np.linalg.norm(xi, axis=-1, keepdims=True)
    out = xi / nrm
    sign = np.where(time_component(out) < 0, -1.0, 1.0)
    return out * sign[..., None]


def boundary_point(xi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    out = normalize_boundary(xi)
    if np.any(np.abs(quad(out)) > tol):
        raise GeometryError("boundary representative is not null")
    return out


def base_point(n: int) -> np.ndarray:
    return frame(n).o.copy()


def point_of(g: np.ndarray) -> np.ndarray:
    """Hyperboloid point o·g."""
    return frame(dim_of(g)).o @ g


def direction(xi: np.ndarray) -> np.ndarray:
    """Unit spatial direction in S^{n-1} of a boundary point (diagonal coords)."""
    w = to_diag(xi)[..., :-1]
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


def boundary_from_direction(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    w = np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1) / SQRT2
    return from_diag(w)


def chordal(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    return np.linalg.norm(direction(xi) - direction(eta), axis=-1)


def endpoints(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward boundary points [e_1 g] and [e_{n+1} g]."""
    g = np.asarray(g, dtype=float)
    return normalize_boundary(g[..., 0, :]), normalize_boundary(g[..., -1, :])


def hyp_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c = bilinear(x, y)
    if np.any(c < 1 - 1e-9):
        raise GeometryError(f"Lorentz product {np.min(c):.12g} < 1: not hyperboloid points")
    return np.arccosh(np.maximum(c, 1.0))


def distance_from_base(g: np.ndarray) -> np.ndarray:
    """d(o, o·g) for a matrix or a stack of matrices."""
    g = np.asarray(g, dtype=float)
    c = 0.5 * (g[..., 0, 0] + g[..., 0, -1] + g[..., -1, 0] + g[..., -1, -1])
    return np.arccosh(np.maximum(c, 1.0))


def busemann(xi: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """beta_xi(x, y) = lim d(x, xi_t) - d(y, xi_t) = log(B(x, xi) / B(y, xi))."""
    bx = bilinear(x, xi)
    by = bilinear(y, xi)
    if np.any(bx <= 0) or np.any(by <= 0):
        raise GeometryError("non-positive pairing with boundary point; inputs are off the upper sheet")
    return np.log(bx) - np.log(by)


# ---------------------------------------------------------------------------
# light cone


@dataclass(frozen=True)
class LightVector:
    v: np.ndarray
    norm: float = field(init=False)
    minus: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        nrm = float(np.linalg.norm(v))
        if nrm == 0:
            raise GeometryError("zero vector is not in V")
        if abs(float(quad(v))) > 1e-10 * nrm**2:
            raise GeometryError("vector is not null")
        if time_component(v) <= 0:
            raise GeometryError("vector is in the lower light cone")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "norm", nrm)
        object.__setattr__(self, "minus", v / nrm)


def _rotation_taking(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """R in SO(m) with a @ R = b for unit row vectors a, b."""
    m = a.size
    eye = np.eye(m)
    diff = a - b
    dn = np.linalg.norm(diff)
    if dn < 1e-15:
        return eye
    u = diff / dn
    h1 = eye - 2.0 * np.outer(u, u)
    j = int(np.argmin(np.abs(b)))
    z = eye[j] - b[j] * b
    z /= np.linalg.norm(z)
    h2 = eye - 2.0 * np.outer(z, z)
    return h1 @ h2


def recover_k(v) -> np.ndarray:
    """An element k of K with e_{n+1} k = v / |v|  (any M-coset representative)."""
    vec = v.v if isinstance(v, LightVector) else np.asarray(v, dtype=float)
    n = vec.size - 1
    fr = frame(n)
    target = to_diag(vec / np.linalg.norm(vec))
    b = target[:-1] / np.linalg.norm(target[:-1])
    a = np.zeros(n)
    a[0] = -1.0  # spatial direction of e_{n+1} in diagonal coordinates
    kd = np.eye(n + 1)
    kd[:-1, :-1] = _rotation_taking(a, b)
    return fr.Pdiag.T @ kd @ fr.Pdiag


# ---------------------------------------------------------------------------
# Iwasawa decomposition


@dataclass(frozen=True)
class IwasawaFactors:
    t: np.ndarray
    s: float
    k: np.ndarray

    def ak(self) -> np.ndarray:
        return a_matrix(self.s, self.k.shape[0] - 1) @ self.k


def iwasawa(g: np.ndarray) -> IwasawaFactors:
    """g = u_t a_s k with s = -log|e_{n+1} g|."""
    g = np.asarray(g, dtype=float)
    n = dim_of(g)
    k0 = recover_k(g[-1])
    h = g @ k0.T  # = u_t a_s m
    s = -np.log(np.linalg.norm(g[-1]))
    t = np.exp(s) * h[1:-1, -1]
    k = a_matrix(-s, n) @ u_matrix(-t) @ g
    return IwasawaFactors(t=t, s=float(s), k=k)


def psi(g: np.ndarray) -> np.ndarray:
    """AK representative of the coset U g."""
    return iwasawa(g).ak()


def u_component(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """t with Psi(x) g Psi(x g)^{-1} = u_t."""
    return iwasawa(np.asarray(x) @ np.asarray(g)).t


# ---------------------------------------------------------------------------
# star product


def star(x: np.ndarray, y: np.ndarray) -> float:
    """sqrt(|x^{-1} E_{1,n+1} y|_max / 2) for AK representatives x, y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    E = np.zeros((d, d))
    E[0, -1] = 1.0
    return float(np.sqrt(0.5 * max_norm(inverse(x) @ E @ y)))


def star_rows(x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised star(x, y) using only the last rows of the y's."""
    col = inverse(x)[:, 0]
    return np.sqrt(0.5 * np.max(np.abs(col)) * np.max(np.abs(ys), axis=-1))


def light_psi(v) -> np.ndarray:
    """AK representative for a light vector: v = e_{n+1} a_{-log|v|} k."""
    lv = v if isinstance(v, LightVector) else LightVector(v)
    return a_matrix(-np.log(lv.norm), lv.v.size - 1) @ recover_k(lv)


def star_vectors(v, u) -> float:
    return star(light_psi(v), light_psi(u))


def star_vectors_closed(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Closed form: sqrt(|v| |u| |e_1 k_v|_inf |u/|u||_inf / 2), e_1 k_v = e_1 + e_{n+1} - v/|v|."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    nv = np.linalg.norm(v, axis=-1)
    nu = np.linalg.norm(u, axis=-1)
    e1k = -v / nv[..., None]
    e1k[..., 0] += 1.0
    e1k[..., -1] += 1.0
    return np.sqrt(0.5 * nv * nu * np.max(np.abs(e1k), axis=-1) * np.max(np.abs(u), axis=-1) / nu)


# ---------------------------------------------------------------------------
# visual map


def visual_inverse(g: np.ndarray, lam: np.ndarray, pole_tol: float = 1e-12) -> np.ndarray:
    """t with (u_t g)^+ = lam. Works on an array of boundary points."""
    g = np.asarray(g, dtype=float)
    lam = normalize_boundary(lam)
    m = lam @ inverse(g)
    m = m / np.linalg.norm(m, axis=-1, keepdims=True)
    if np.any(np.abs(m[..., 0]) <= pole_tol):
        raise PoleError("boundary point coincides with g^-")
    return m[..., 1:-1] / m[..., :1]


def visual_inverse_safe(g: np.ndarray, lam: np.ndarray, pole_tol: float = 1e-12):
    """Like visual_inverse but returns (t, pole_mask) instead of raising."""
    g = np.asarray(g, dtype=float)
    lam = normalize_boundary(np.atleast_2d(lam))
    m = lam @ inverse(g)
    m = m / np.linalg.norm(m, axis=-1, keepdims=True)
    pole = np.abs(m[:, 0]) <= pole_tol
    first = np.where(pole, 1.0, m[:, 0])
    return m[:, 1:-1] / first[:, None], pole


def hyperbolic_element(xi_plus: np.ndarray, xi_minus: np.ndarray, length: float) -> np.ndarray:
    """Hyperbolic isometry with attracting/repelling fixed points xi_plus, xi_minus
    (for the right action on the boundary) and translation length ``length``."""
    xp = normalize_boundary(xi_plus)
    xm = normalize_boundary(xi_minus)
    n = xp.size - 1
    b = float(bilinear(xp, xm))
    if b <= 1e-14:
        raise GeometryError("fixed points must be distinct")
    g = np.zeros((n + 1, n + 1))
    g[0] = xp / np.sqrt(b)
    g[-1] = xm / np.sqrt(b)
    basis = list(np.eye(n + 1))
    rows = []
    for e in basis:
        w = e - bilinear(e, g[-1]) * g[0] - bilinear(e, g[0]) * g[-1]
        for r in rows:
            w = w + bilinear(w, r) * r
        q = -float(quad(w))
        if q > 1e-8:
            rows.append(w / np.sqrt(q))
        if len(rows) == n - 1:
            break
    g[1:-1] = np.array(rows)
    if np.linalg.det(g) < 0:
        g[1] = -g[1]
    return inverse(g) @ a_matrix(length, n) @ g
