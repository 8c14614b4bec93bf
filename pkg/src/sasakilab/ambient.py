"""Chart-based ambient geometry on an odd-dimensional manifold.

Structure tensors are given as plain Python callables taking a list of
coordinate scalars.  Written with ordinary arithmetic (and the functions
of :mod:`sasakilab.numkit`), they evaluate equally on floats, batched
arrays or jets, which is how the Levi-Civita connection and all the
covariant derivatives below get their partials.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numkit as nk
from .errors import DomainError

PROBE_SEED = 7
N_RANDOM_PROBES = 3
RANK_TOL = 1e-8

FIELDS = ("phi", "xi", "eta", "metric")


def _everywhere(p):
    return np.ones(np.shape(p)[:-1], dtype=bool)


@dataclass(frozen=True)
class AmbientStructure:
    """The quadruple (phi, xi, eta, metric) on a chart of dimension ``dim``."""

    dim: int
    phi: Callable
    xi: Callable
    eta: Callable
    metric: Callable
    domain: Callable = _everywhere
    name: str = "custom"

    @property
    def n(self) -> int:
        return (self.dim - 1) // 2

    def _call(self, which: str, coords):
        return getattr(self, which)(coords)

    def field(self, which: str, p) -> np.ndarray:
        """Numeric value of a structure field at ``p`` (shape ``(..., dim)``)."""
        p = np.asarray(p, dtype=float)
        self.check_domain(p)
        out = nk.assemble(self._call(which, [p[..., k] for k in range(self.dim)]))
        return np.broadcast_to(out, p.shape[:-1] + (self.dim,) * _rank(which))

    def field_jet(self, which: str, p, order: int = 1) -> nk.Jet:
        """Field at ``p`` with partials in the chart coordinates."""
        p = np.asarray(p, dtype=float)
        self.check_domain(p)
        xs = nk.Jet.variables(p, order=order)
        return _as_jet(nk.assemble(self._call(which, xs)), xs[0], _rank(which))

    def field_along(self, which: str, coords: list) -> nk.Jet:
        """Field composed with coordinate jets (e.g. an embedding b(s))."""
        return _as_jet(nk.assemble(self._call(which, coords)), coords[0], _rank(which))

    def check_domain(self, p):
        if not np.all(self.domain(p)):
            raise DomainError("point outside the chart domain")

    def with_scaled_xi(self, factor: float) -> "AmbientStructure":
        """Fault-injection hook: the same structure with xi multiplied."""
        xi = self.xi

        def scaled(c):
            return [factor * e for e in xi(c)]

        return dataclasses.replace(self, xi=scaled, name=f"{self.name}[xi*{factor:g}]")


def _rank(which: str) -> int:
    return 2 if which in ("phi", "metric") else 1


def _as_jet(x, proto: nk.Jet, rank: int) -> nk.Jet:
    if isinstance(x, nk.Jet):
        return x
    # constant field: zero derivatives
    x = np.broadcast_to(x, proto.shape + np.shape(x)[np.ndim(x) - rank:])
    return nk.Jet.constant(x, proto.nvar, proto.order)


@dataclass(frozen=True)
class ChristoffelData:
    """Levi-Civita symbols ``gamma[..., k, i, j]`` = Gamma^k_ij."""

    gamma: np.ndarray

    def apply(self, X, Y) -> np.ndarray:
        """Gamma^k_ij X^i Y^j."""
        return np.einsum("...kij,...i,...j->...k", self.gamma, X, Y)


def christoffel_from_jet(G: nk.Jet) -> np.ndarray:
    """Christoffel symbols from a first-order metric jet (derivative
    variables must be the chart coordinates the metric lives on)."""
    g = G.val
    dg = np.moveaxis(G.grad, 0, -3)  # [..., l, i, j] = d_l g_ij
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise nk.NumericError("singular metric") from exc
    # lowered: Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    return np.einsum("...kl,...lij->...kij", ginv, low)


def christoffel(A: AmbientStructure, p) -> ChristoffelData:
    return ChristoffelData(christoffel_from_jet(A.field_jet("metric", p)))


def metric_compatibility_residual(A: AmbientStructure, p) -> np.ndarray:
    """max |d_i g_jk - Gamma^l_ij g_lk - Gamma^l_ik g_jl|."""
    G = A.field_jet("metric", p)
    gam = christoffel_from_jet(G)
    dg = np.moveaxis(G.grad, 0, -3)
    rhs = np.einsum("...lij,...lk->...ijk", gam, G.val) + np.einsum("...lik,...jl->...ijk", gam, G.val)
    return np.abs(dg - rhs).max(axis=(-1, -2, -3))


def _covder(V: nk.Jet, X, gam: np.ndarray) -> np.ndarray:
    """nabla_X V for a vector field jet V."""
    dV = np.moveaxis(V.grad, 0, -2)  # [..., i, k] = d_i V^k
    return np.einsum("...i,...ik->...k", X, dV) + np.einsum("...kij,...i,...j->...k", gam, X, V.val)


def covder_vec(A: AmbientStructure, X, Yfield: Callable, p) -> np.ndarray:
    """nabla_X Y with ``Yfield`` a vector field (coords -> components)."""
    p = np.asarray(p, dtype=float)
    xs = nk.Jet.variables(p, order=1)
    Y = _as_jet(nk.assemble(Yfield(xs)), xs[0], 1)
    gam = christoffel(A, p).gamma
    return _covder(Y, np.asarray(X, dtype=float), gam)


def covder_phi(A: AmbientStructure, X, Y, p, extension: Callable | None = None) -> np.ndarray:
    """(nabla_X phi) Y = nabla_X(phi Y_ext) - phi(nabla_X Y_ext).

    ``extension`` maps coordinates to a vector field agreeing with ``Y`` at
    ``p``; by default ``Y`` is extended with constant chart components.
    """
    p = np.asarray(p, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    xs = nk.Jet.variables(p, order=1)
    if extension is None:
        Yext = nk.Jet.constant(np.broadcast_to(Y, p.shape), len(xs), order=1)
    else:
        Yext = _as_jet(nk.assemble(extension(xs)), xs[0], 1)
    Phi = _as_jet(nk.assemble(A.phi(xs)), xs[0], 2)
    PY = nk.contract("...kj,...j->...k", Phi, Yext)
    gam = christoffel(A, p).gamma
    return _covder(PY, X, gam) - np.einsum("...kj,...j->...k", Phi.val, _covder(Yext, X, gam))


# -- residual suites -------------------------------------------------------

def probe_basis(dim: int, seed: int = PROBE_SEED, extra: int = N_RANDOM_PROBES) -> np.ndarray:
    """Chart basis followed by seeded random vectors, as columns."""
    rng = np.random.default_rng(seed)
    return np.concatenate([np.eye(dim), rng.standard_normal((dim, extra))], axis=1)


def _inf(x, naxes):
    return np.abs(x).max(axis=tuple(range(-naxes, 0)))


def contact_metric_residuals(A: AmbientStructure, p) -> dict[str, np.ndarray]:
    """Residuals of the almost contact metric axioms at ``p``."""
    p = np.asarray(p, dtype=float)
    phi = A.field("phi", p)
    xi = A.field("xi", p)
    eta = A.field("eta", p)
    g = A.field("metric", p)
    P = probe_basis(A.dim)
    eye = np.eye(A.dim)
    phiP = phi @ P
    etaP = np.einsum("...k,kp->...p", eta, P)
    compat = (np.swapaxes(phiP, -1, -2) @ g @ phiP - P.T @ g @ P
              + etaP[..., :, None] * etaP[..., None, :])
    rank = nk.matrix_rank(phi, RANK_TOL)
    return {
        "eta_xi": np.abs(np.einsum("...k,...k->...", eta, xi) - 1.0),
        "phi_squared": _inf(phi @ phi + eye - xi[..., :, None] * eta[..., None, :], 2),
        "eta_phi": _inf(np.einsum("...k,...kj->...j", eta, phi), 1),
        "phi_xi": _inf(np.einsum("...kj,...j->...k", phi, xi), 1),
        "phi_rank": np.abs(rank - 2 * A.n).astype(float),
        "metric_compat": _inf(compat, 2),
        "eta_dual": _inf(np.einsum("...kj,...j->...k", g, xi) - eta, 1),
    }


def structure_derivatives(A: AmbientStructure, p):
    """(nabla phi)[..., i, k, j] = (nabla_i phi)^k_j and
    (nabla xi)[..., i, k] = (nabla_i xi)^k, plus the plain fields."""
    p = np.asarray(p, dtype=float)
    Phi = A.field_jet("phi", p)
    Xi = A.field_jet("xi", p)
    gam = christoffel(A, p).gamma
    dphi = np.moveaxis(Phi.grad, 0, -3)
    nphi = (dphi + np.einsum("...kil,...lj->...ikj", gam, Phi.val)
            - np.einsum("...kl,...lij->...ikj", Phi.val, gam))
    nxi = np.moveaxis(Xi.grad, 0, -2) + np.einsum("...kil,...l->...ik", gam, Xi.val)
    return nphi, nxi, Phi.val, Xi.val


def sasakian_residuals(A: AmbientStructure, p) -> dict[str, np.ndarray]:
    """Residuals of the two Sasakian conditions over the probe basis."""
    p = np.asarray(p, dtype=float)
    nphi, nxi, phi, xi = structure_derivatives(A, p)
    eta = A.field("eta", p)
    g = A.field("metric", p)
    P = probe_basis(A.dim)
    # (nabla_X phi) Y for every probe pair: [..., a, b, k]
    lhs = np.einsum("...ikj,ia,jb->...abk", nphi, P, P)
    gXY = np.einsum("...ij,ia,jb->...ab", g, P, P)
    etaY = np.einsum("...j,jb->...b", eta, P)
    rhs = gXY[..., None] * xi[..., None, None, :] - etaY[..., None, :, None] * P.T[:, None, :]
    lhs_xi = np.einsum("...ik,ia->...ak", nxi, P)
    rhs_xi = -np.einsum("...kj,ja->...ak", phi, P)
    return {
        "nabla_phi": _inf(lhs - rhs, 3),
        "nabla_xi": _inf(lhs_xi - rhs_xi, 2),
    }


def fundamental_form(A: AmbientStructure, p) -> np.ndarray:
    """F[..., a, b] = g(phi e_a, e_b)."""
    phi = A.field("phi", p)
    g = A.field("metric", p)
    return np.swapaxes(phi, -1, -2) @ g


def fundamental_form_residuals(A: AmbientStructure, p) -> dict[str, np.ndarray]:
    p = np.asarray(p, dtype=float)
    F = fundamental_form(A, p)
    phi = A.field("phi", p)
    P = probe_basis(A.dim)
    FP = P.T @ F @ P
    phiP = phi @ P
    swap = P.T @ F @ phiP  # F(X, phi Y)
    return {
        "F_antisym": _inf(FP + np.swapaxes(FP, -1, -2), 2),
        "F_phi_swap": _inf(swap - np.swapaxes(swap, -1, -2), 2),
        "F_phi_phi": _inf(np.swapaxes(phiP, -1, -2) @ F @ phiP - FP, 2),
    }


def all_residuals(A: AmbientStructure, p) -> dict[str, np.ndarray]:
    out = contact_metric_residuals(A, p)
    out.update(sasakian_residuals(A, p))
    out.update(fundamental_form_residuals(A, p))
    return out
