"""Numerical kernel: forward-mode jets, a finite-difference oracle and
small dense linear algebra.

A :class:`Jet` carries a value array together with its first (and
optionally second) partial derivatives with respect to ``nvar`` input
variables.  Derivative axes are *leading*: for a value of shape ``S`` the
gradient has shape ``(nvar,) + S`` and the Hessian ``(nvar, nvar) + S``.
Keeping them in front means plain numpy broadcasting (including batched
``matmul``) lines up values and derivatives without any index juggling,
so a whole sample grid is differentiated in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericError, RankError, SymmetryError

DEFAULT_FD_STEP = 1e-5


def _pad(x: np.ndarray, nlead: int, ndim: int) -> np.ndarray:
    """Insert unit axes after the ``nlead`` derivative axes so the value
    part of ``x`` has ``ndim`` dimensions."""
    core = x.shape[nlead:]
    missing = ndim - len(core)
    if missing <= 0:
        return x
    return x.reshape(x.shape[:nlead] + (1,) * missing + core)


class Jet:
    """Value plus first and (optionally) second derivatives.

    ``hess is None`` marks a first-order jet; mixing orders yields a
    first-order result.
    """

    __slots__ = ("val", "grad", "hess")
    __array_ufunc__ = None  # ndarray <op> Jet defers to the Jet's reflected op

    def __init__(self, val, grad, hess=None):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = None if hess is None else np.asarray(hess, dtype=float)

    # -- construction -------------------------------------------------
    @staticmethod
    def variables(x, order: int = 2) -> list["Jet"]:
        """Independent variables seeded at ``x`` (shape ``(..., nvar)``)."""
        x = np.asarray(x, dtype=float)
        m = x.shape[-1]
        batch = x.shape[:-1]
        out = []
        for i in range(m):
            g = np.zeros((m,) + batch)
            g[i] = 1.0
            h = np.zeros((m, m) + batch) if order >= 2 else None
            out.append(Jet(x[..., i], g, h))
        return out

    @staticmethod
    def constant(val, nvar: int, order: int = 2) -> "Jet":
        val = np.asarray(val, dtype=float)
        h = np.zeros((nvar, nvar) + val.shape) if order >= 2 else None
        return Jet(val, np.zeros((nvar,) + val.shape), h)

    # -- introspection ------------------------------------------------
    @property
    def nvar(self) -> int:
        return self.grad.shape[0]

    @property
    def shape(self) -> tuple:
        return self.val.shape

    @property
    def ndim(self) -> int:
        return self.val.ndim

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def truncate(self) -> "Jet":
        """Drop the second-order part."""
        return Jet(self.val, self.grad)

    def __repr__(self):
        return f"Jet(shape={self.shape}, nvar={self.nvar}, order={self.order})"

    # -- structural ops -----------------------------------------------
    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        g = self.grad[(slice(None),) + idx]
        h = None if self.hess is None else self.hess[(slice(None), slice(None)) + idx]
        return Jet(self.val[idx], g, h)

    @property
    def T(self) -> "Jet":
        h = None if self.hess is None else np.swapaxes(self.hess, -1, -2)
        return Jet(np.swapaxes(self.val, -1, -2), np.swapaxes(self.grad, -1, -2), h)

    def sum(self, axis: int = -1) -> "Jet":
        if axis >= 0:
            axis -= self.ndim
        h = None if self.hess is None else self.hess.sum(axis=axis)
        return Jet(self.val.sum(axis=axis), self.grad.sum(axis=axis), h)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        m = self.nvar
        h = None if self.hess is None else self.hess.reshape((m, m) + tuple(shape))
        return Jet(self.val.reshape(shape), self.grad.reshape((m,) + tuple(shape)), h)

    def expand(self, axis: int) -> "Jet":
        """Insert a unit axis in the value shape (negative ``axis`` only)."""
        assert axis < 0
        h = None if self.hess is None else np.expand_dims(self.hess, axis)
        return Jet(np.expand_dims(self.val, axis), np.expand_dims(self.grad, axis), h)

    # -- arithmetic ---------------------------------------------------
    def _binary_const(self, c, op):
        c = np.asarray(c, dtype=float)
        val = op(self.val, c)
        nd = val.ndim
        m = self.nvar
        if op is np.add or op is np.subtract:
            g = np.broadcast_to(_pad(self.grad, 1, nd), (m,) + val.shape)
            h = None
            if self.hess is not None:
                h = np.broadcast_to(_pad(self.hess, 2, nd), (m, m) + val.shape)
            return Jet(val, g, h)
        # multiply
        g = _pad(self.grad, 1, nd) * c
        h = None if self.hess is None else _pad(self.hess, 2, nd) * c
        return Jet(val, g, h)

    def __add__(self, other):
        if not isinstance(other, Jet):
            return self._binary_const(other, np.add)
        val = self.val + other.val
        nd = val.ndim
        g = _pad(self.grad, 1, nd) + _pad(other.grad, 1, nd)
        h = None
        if self.hess is not None and other.hess is not None:
            h = _pad(self.hess, 2, nd) + _pad(other.hess, 2, nd)
        return Jet(val, g, h)

    __radd__ = __add__

    def __neg__(self):
        h = None if self.hess is None else -self.hess
        return Jet(-self.val, -self.grad, h)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self._binary_const(other, np.multiply)
        a, b = self, other
        val = a.val * b.val
        nd = val.ndim
        ag, bg = _pad(a.grad, 1, nd), _pad(b.grad, 1, nd)
        g = ag * b.val + a.val * bg
        h = None
        if a.hess is not None and b.hess is not None:
            cross = ag[:, None] * bg[None, :]
            h = (_pad(a.hess, 2, nd) * b.val + a.val * _pad(b.hess, 2, nd)
                 + cross + np.swapaxes(cross, 0, 1))
        return Jet(val, g, h)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.val
        if np.any(v == 0.0):
            raise NumericError("division by zero in jet arithmetic")
        return _chain(self, 1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, Jet) or int(n) != n:
            raise TypeError("Jet supports integer powers only")
        n = int(n)
        v = self.val
        if n == 0:
            return Jet.constant(np.ones_like(v), self.nvar, self.order)
        if n < 0 and np.any(v == 0.0):
            raise NumericError("negative power of zero")
        f1 = n * v ** (n - 1)
        f2 = n * (n - 1) * v ** (n - 2) if n not in (0, 1) else np.zeros_like(v)
        return _chain(self, v**n, f1, f2)

    def __matmul__(self, other):
        return contract("...ij,...jk->...ik", self, other)

    def __rmatmul__(self, other):
        return contract("...ij,...jk->...ik", other, self)


def _chain(a: Jet, f0, f1, f2) -> Jet:
    """Apply a scalar function with derivatives f1, f2 elementwise."""
    g = f1 * a.grad
    h = None
    if a.hess is not None:
        h = f1 * a.hess + f2 * (a.grad[:, None] * a.grad[None, :])
    return Jet(f0, g, h)


def contract(spec: str, a, b):
    """Bilinear ``np.einsum`` contraction lifted to jets.

    ``spec`` is an ordinary two-operand einsum string; use ``...`` for
    batch axes.  Either operand may be a plain array.
    """
    lhs, out = spec.split("->")
    la, lb = lhs.split(",")
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if not ja and not jb:
        return np.einsum(spec, a, b)
    av = a.val if ja else np.asarray(a, dtype=float)
    bv = b.val if jb else np.asarray(b, dtype=float)
    val = np.einsum(spec, av, bv)
    g = 0.0
    if ja:
        g = g + np.einsum(f"Z{la},{lb}->Z{out}", a.grad, bv)
    if jb:
        g = g + np.einsum(f"{la},Z{lb}->Z{out}", av, b.grad)
    h = None
    if all(x.hess is not None for x in (a, b) if isinstance(x, Jet)):
        h = 0.0
        if ja:
            h = h + np.einsum(f"YZ{la},{lb}->YZ{out}", a.hess, bv)
        if jb:
            h = h + np.einsum(f"{la},YZ{lb}->YZ{out}", av, b.hess)
        if ja and jb:
            cross = np.einsum(f"Y{la},Z{lb}->YZ{out}", a.grad, b.grad)
            h = h + cross + np.swapaxes(cross, 0, 1)
    return Jet(val, g, h)


def inv(a):
    """Matrix inverse over the last two axes (jets or arrays)."""
    if not isinstance(a, Jet):
        return np.linalg.inv(a)
    try:
        ai = np.linalg.inv(a.val)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular matrix") from exc
    da = a.grad
    g = -(ai @ da @ ai)
    h = None
    if a.hess is not None:
        t = ai @ da  # (m, ..., k, k)
        prod = da[:, None] @ t[None, :]  # dA_i Ai dA_j
        h = ai @ (prod + np.swapaxes(prod, 0, 1) - a.hess) @ ai
    return Jet(ai, g, h)


def value(x):
    """Plain value of a jet or number."""
    return x.val if isinstance(x, Jet) else np.asarray(x, dtype=float)


def assemble(nested) -> "Jet | np.ndarray":
    """Build one array-valued jet from a nested list of scalar entries.

    Entries may be jets of a common shape ``S`` or plain numbers; the
    result has value shape ``S + nested_shape``.  Without any jet entry a
    plain ndarray is returned (broadcast over the batch shape of array
    entries).
    """
    arr = np.empty(_nested_shape(nested), dtype=object)
    _fill(arr, nested)
    flat = list(arr.flat)
    proto = next((e for e in flat if isinstance(e, Jet)), None)
    if proto is None:
        bshape = np.broadcast_shapes(*[np.shape(e) for e in flat])
        vals = [np.broadcast_to(np.asarray(e, dtype=float), bshape) for e in flat]
        return np.stack(vals, axis=-1).reshape(bshape + arr.shape)
    m, S, order = proto.nvar, proto.shape, 2
    for e in flat:
        if isinstance(e, Jet) and e.hess is None:
            order = 1
    vals, grads, hesss = [], [], []
    for e in flat:
        if not isinstance(e, Jet):
            e = Jet.constant(np.broadcast_to(np.asarray(e, dtype=float), S), m, order)
        vals.append(np.broadcast_to(e.val, S))
        grads.append(np.broadcast_to(e.grad, (m,) + S))
        if order == 2:
            hesss.append(np.broadcast_to(e.hess, (m, m) + S))
    val = np.stack(vals, axis=-1).reshape(S + arr.shape)
    grad = np.stack(grads, axis=-1).reshape((m,) + S + arr.shape)
    hess = None
    if order == 2:
        hess = np.stack(hesss, axis=-1).reshape((m, m) + S + arr.shape)
    return Jet(val, grad, hess)


def _nested_shape(nested) -> tuple:
    if isinstance(nested, (list, tuple)):
        return (len(nested),) + _nested_shape(nested[0])
    return ()


def _fill(arr, nested, prefix=()):
    if isinstance(nested, (list, tuple)):
        for i, item in enumerate(nested):
            _fill(arr, item, prefix + (i,))
    else:
        arr[prefix] = nested


# -- elementary functions (dispatch on Jet vs plain arrays) ---------------

def _check_finite(v, what):
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite result in {what}")


def sin(x):
    if isinstance(x, Jet):
        return _chain(x, np.sin(x.val), np.cos(x.val), -np.sin(x.val))
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        return _chain(x, np.cos(x.val), -np.sin(x.val), -np.cos(x.val))
    return np.cos(x)


def tan(x):
    if isinstance(x, Jet):
        t = np.tan(x.val)
        sec2 = 1.0 + t * t
        return _chain(x, t, sec2, 2.0 * t * sec2)
    return np.tan(x)


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.val)
        return _chain(x, e, e, e)
    return np.exp(x)


def log(x):
    v = value(x)
    if np.any(v <= 0.0):
        raise DomainError("log of a non-positive number")
    if isinstance(x, Jet):
        return _chain(x, np.log(v), 1.0 / v, -1.0 / v**2)
    return np.log(x)


def sqrt(x):
    v = value(x)
    if np.any(v < 0.0):
        raise DomainError("sqrt of a negative number")
    if isinstance(x, Jet):
        if np.any(v == 0.0):
            raise NumericError("derivative of sqrt at zero")
        r = np.sqrt(v)
        return _chain(x, r, 0.5 / r, -0.25 / (r * v))
    return np.sqrt(x)


def sinh(x):
    if isinstance(x, Jet):
        return _chain(x, np.sinh(x.val), np.cosh(x.val), np.sinh(x.val))
    return np.sinh(x)


def cosh(x):
    if isinstance(x, Jet):
        return _chain(x, np.cosh(x.val), np.sinh(x.val), np.cosh(x.val))
    return np.cosh(x)


def tanh(x):
    if isinstance(x, Jet):
        t = np.tanh(x.val)
        d = 1.0 - t * t
        return _chain(x, t, d, -2.0 * t * d)
    return np.tanh(x)


FUNCTIONS: dict[str, Callable] = {
    "sin": sin, "cos": cos, "tan": tan, "exp": exp, "log": log,
    "sqrt": sqrt, "sinh": sinh, "cosh": cosh, "tanh": tanh,
}


# -- derivative evaluation ------------------------------------------------

def _outputs(res) -> list:
    if isinstance(res, (list, tuple)):
        return list(res)
    return [res]


def eval_jet2(f: Callable, p, domain: Callable | None = None) -> list[Jet]:
    """Value, gradient and Hessian of every output component of ``f``.

    ``f`` receives a list of coordinate scalars and returns a scalar or a
    sequence of scalars; ``p`` has shape ``(nvar,)`` or ``(batch, nvar)``.
    """
    p = np.asarray(p, dtype=float)
    if domain is not None and not np.all(domain(p)):
        raise DomainError(f"point outside the domain: {p!r}")
    xs = Jet.variables(p, order=2)
    out = []
    for comp in _outputs(f(xs)):
        if not isinstance(comp, Jet):
            comp = Jet.constant(np.broadcast_to(np.asarray(comp, float), p.shape[:-1]), p.shape[-1])
        _check_finite(comp.val, "eval_jet2")
        _check_finite(comp.grad, "eval_jet2")
        _check_finite(comp.hess, "eval_jet2")
        out.append(comp)
    return out


def fd_derivative(f: Callable, p, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``f`` (truncation error O(step**2)).

    Returns shape ``(n_out, nvar)`` for a single point, ``(batch, n_out,
    nvar)`` for a batch of points.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(p, dtype=float)
    m = p.shape[-1]

    def call(x):
        res = _outputs(f([x[..., i] for i in range(m)]))
        cols = [np.broadcast_to(np.asarray(r, float), x.shape[:-1]) for r in res]
        v = np.stack(cols, axis=-1)
        _check_finite(v, "fd_derivative")
        return v

    cols = []
    for i in range(m):
        dp = np.zeros(m)
        dp[i] = step
        cols.append((call(p + dp) - call(p - dp)) / (2.0 * step))
    return np.stack(cols, axis=-1)


# -- dense linear algebra -------------------------------------------------

def gram_schmidt(vectors: Sequence, metric, tol: float = 1e-12) -> list[np.ndarray]:
    """Metric-orthonormalize ``vectors`` (modified Gram-Schmidt)."""
    g = np.asarray(metric, dtype=float)
    out: list[np.ndarray] = []
    for k, vec in enumerate(vectors):
        w = np.array(vec, dtype=float)
        scale = np.sqrt(max(w @ g @ w, 0.0))
        for e in out:
            w = w - (e @ g @ w) * e
        nrm2 = w @ g @ w
        if nrm2 <= (tol * max(scale, 1.0)) ** 2:
            raise RankError(f"vector {k} is linearly dependent on its predecessors")
        out.append(w / np.sqrt(nrm2))
    return out


@dataclass(frozen=True)
class EigenPairSet:
    """Sorted eigenvalues and metric-orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray


def jacobi_eigh(a, tol: float = 1e-15, max_sweeps: int = 50):
    """Cyclic Jacobi eigen-solver for symmetric matrices, batched over
    leading axes.  Returns ascending eigenvalues and column eigenvectors."""
    a = np.array(a, dtype=float)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    d = a.shape[-1]
    v = np.broadcast_to(np.eye(d), a.shape).copy()
    scale = np.sqrt((a**2).sum(axis=(-1, -2)))
    for _ in range(max_sweeps):
        off = np.sqrt(np.maximum((a**2).sum(axis=(-1, -2)) - (np.diagonal(a, axis1=-2, axis2=-1) ** 2).sum(-1), 0.0))
        if np.all(off <= tol * np.maximum(scale, 1e-300)):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[..., p, q]
                active = np.abs(apq) > 1e-300
                safe = np.where(active, apq, 1.0)
                theta = (a[..., q, q] - a[..., p, p]) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J acting on columns p, q
                ap, aq = a[..., :, p].copy(), a[..., :, q].copy()
                a[..., :, p] = c[..., None] * ap - s[..., None] * aq
                a[..., :, q] = s[..., None] * ap + c[..., None] * aq
                ap, aq = a[..., p, :].copy(), a[..., q, :].copy()
                a[..., p, :] = c[..., None] * ap - s[..., None] * aq
                a[..., q, :] = s[..., None] * ap + c[..., None] * aq
                vp, vq = v[..., :, p].copy(), v[..., :, q].copy()
                v[..., :, p] = c[..., None] * vp - s[..., None] * vq
                v[..., :, q] = s[..., None] * vp + c[..., None] * vq
    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return w, v


def sym_eigen_pair(H, g, tol: float = 1e-8) -> EigenPairSet:
    """Spectrum of an operator ``H`` that is self-adjoint w.r.t. metric ``g``.

    Works on single matrices or stacks of them.  The problem is reduced
    to a symmetric one through the Cholesky factor of ``g`` and solved by
    Jacobi rotations.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    gh = g @ H
    asym = np.abs(gh - np.swapaxes(gh, -1, -2)).max(axis=(-1, -2))
    scale = np.maximum(np.abs(gh).max(axis=(-1, -2)), 1.0)
    if np.any(asym > tol * scale):
        raise SymmetryError(f"operator not self-adjoint (asymmetry {np.max(asym):.3e})")
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NumericError("metric is not positive definite") from exc
    Li = np.linalg.inv(L)
    M = Li @ gh @ np.swapaxes(Li, -1, -2)
    w, y = jacobi_eigh(M)
    x = np.swapaxes(Li, -1, -2) @ y
    return EigenPairSet(w, x)


def matrix_rank(M, tol: float = 1e-8):
    """Number of singular values above ``tol`` times the largest one."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    smax = s.max(axis=-1, keepdims=True)
    rank = (s > tol * smax).sum(axis=-1)
    return np.where(smax[..., 0] > 0.0, rank, 0)
