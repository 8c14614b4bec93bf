"""Parametric hypersurfaces of an ambient contact metric chart.

Everything is evaluated on a whole batch of parameter points at once.
The embedding is differentiated to second order with jets; the induced
fields (phi, u, v, U, V, lambda, g) are then carried as first-order jets
in the parameters, which is what the covariant-derivative identities
need.

Sign conventions.  With ``c = g~(N, N)`` and the Gauss/Weingarten split

    nabla~_{BX} BY = B nabla_X Y + h(X, Y) N,
    nabla~_{BX} N  = B H_W X + w(X) N,

metric compatibility gives ``H_W = -c H`` where ``H = g^-1 h`` is the
shape operator.  All identities below are stated in terms of ``H`` and
``c``; for a unit normal ``c = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ambient as amb
from . import numkit as nk
from .ambient import AmbientStructure
from .errors import ConfigError, RankError, StructureError
from .expr import Expression

PROBE_SEED = 11
ORIENT_TOL = 1e-10
PHI_N_TOL = 1e-8
RANK_TOL = 1e-10


@dataclass(frozen=True)
class NormalPolicy:
    """``unit`` or ``scaled`` (unit normal times a positive field sigma)."""

    kind: str = "unit"
    sigma: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("unit", "scaled"):
            raise ConfigError(f"unknown normal policy {self.kind!r}")
        if self.kind == "scaled" and self.sigma is None:
            raise ConfigError("scaled normal policy needs a sigma expression")

    @classmethod
    def scaled(cls, sigma) -> "NormalPolicy":
        return cls("scaled", sigma)


@dataclass(frozen=True)
class Embedding:
    """A map from ``2n`` parameters into the ambient chart.

    ``components`` are callables on a list of parameter scalars (parsed
    :class:`~sasakilab.expr.Expression` objects qualify).  ``orientation``
    multiplies the normal chosen by the default sign rule.
    """

    components: tuple
    ambient: AmbientStructure
    normal_policy: NormalPolicy = NormalPolicy()
    orientation: int = 1

    def __post_init__(self):
        if len(self.components) != self.ambient.dim:
            raise ConfigError(
                f"embedding has {len(self.components)} components, ambient dimension is {self.ambient.dim}")
        if self.orientation not in (1, -1):
            raise ConfigError("orientation must be +1 or -1")

    @property
    def nparams(self) -> int:
        return self.ambient.dim - 1

    @classmethod
    def from_strings(cls, ambient: AmbientStructure, exprs: Sequence[str],
                     normal: str | dict = "unit", orientation: int = 1) -> "Embedding":
        m = ambient.dim - 1
        comps = tuple(Expression(t, m) for t in exprs)
        if normal == "unit":
            policy = NormalPolicy()
        elif isinstance(normal, dict) and set(normal) == {"scaled"}:
            policy = NormalPolicy.scaled(Expression(normal["scaled"], m))
        else:
            raise ConfigError(f"invalid normal policy {normal!r}")
        return cls(comps, ambient, policy, orientation)

    def map(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        coords = [s[..., i] for i in range(self.nparams)]
        return np.stack([np.broadcast_to(nk.value(f(coords)), s.shape[:-1]) for f in self.components], -1)


def _jetify(x, proto: nk.Jet) -> nk.Jet:
    if isinstance(x, nk.Jet):
        return x
    return nk.Jet.constant(np.broadcast_to(np.asarray(x, float), proto.shape), proto.nvar, proto.order)


# -- per-point data types ---------------------------------------------------

@dataclass(frozen=True)
class Frame:
    Bmat: np.ndarray
    tangent_basis: list
    N: np.ndarray
    etaN: float
    sigma: float


@dataclass(frozen=True)
class InducedStructure:
    """Induced (phi, g, u, v, lambda) data; fields may carry batch axes."""

    phi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    Uvec: np.ndarray
    Vvec: np.ndarray
    lam: np.ndarray
    g: np.ndarray
    etaN: np.ndarray
    c: np.ndarray = field(default=1.0)  # g~(N, N)


@dataclass(frozen=True)
class SecondFundamentalData:
    h: np.ndarray
    H: np.ndarray
    w: np.ndarray
    induced_gamma: np.ndarray


@dataclass
class HypersurfaceData:
    """All per-point quantities for a batch of parameter points ``s``."""

    s: np.ndarray
    b: np.ndarray
    B: nk.Jet          # (P, K, m), first order
    d2b: np.ndarray    # (P, K, m, m)
    rank_ok: np.ndarray
    N: nk.Jet          # (P, K)
    c: nk.Jet          # (P,)
    sigma: nk.Jet      # (P,)
    Gt: nk.Jet
    Phi: nk.Jet
    Xi: nk.Jet
    Eta: nk.Jet
    g: nk.Jet
    phi: nk.Jet
    u: nk.Jet
    v: nk.Jet
    U: nk.Jet
    V: nk.Jet
    lam: nk.Jet
    etaN: nk.Jet
    phiN_normal: np.ndarray
    gamma_ambient: np.ndarray
    h: np.ndarray
    H: np.ndarray
    HW: np.ndarray
    w: np.ndarray
    gamma: np.ndarray
    gauss_tangential: np.ndarray

    @property
    def npoints(self) -> int:
        return self.s.shape[0]

    def induced(self) -> InducedStructure:
        return InducedStructure(self.phi.val, self.u.val, self.v.val, self.U.val, self.V.val,
                                self.lam.val, self.g.val, self.etaN.val, self.c.val)

    def second_fundamental(self) -> SecondFundamentalData:
        return SecondFundamentalData(self.h, self.H, self.w, self.gamma)


def _orientation_sign(n_unit: np.ndarray, etaN: np.ndarray) -> np.ndarray:
    """+1/-1 per point: eta(N) >= 0, else first clearly nonzero component > 0."""
    sgn = np.sign(etaN)
    scale = np.abs(n_unit).max(axis=-1, keepdims=True)
    nz = np.abs(n_unit) > 1e-12 * scale
    first = np.take_along_axis(n_unit, np.argmax(nz, axis=-1)[..., None], axis=-1)[..., 0]
    tie = np.abs(etaN) <= ORIENT_TOL
    return np.where(tie, np.sign(first), sgn)


def evaluate(e: Embedding, s) -> HypersurfaceData:
    """Frame, induced structure and second fundamental data at points ``s``
    (shape ``(P, 2n)``)."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    P, m = s.shape
    if m != e.nparams:
        raise ConfigError(f"expected {e.nparams} parameters per point, got {m}")
    A = e.ambient
    K = A.dim
    xs = nk.Jet.variables(s, order=2)
    comps = [_jetify(f(xs), xs[0]) for f in e.components]
    bvec = nk.assemble(comps)
    for arr in (bvec.val, bvec.grad, bvec.hess):
        if not np.all(np.isfinite(arr)):
            raise nk.NumericError("non-finite embedding value or derivative")
    B = nk.Jet(np.moveaxis(bvec.grad, 0, -1), np.moveaxis(bvec.hess, 0, -1))
    d2b = np.moveaxis(bvec.hess, (0, 1), (-2, -1))
    rank_ok = nk.matrix_rank(B.val, RANK_TOL) == m
    if not np.all(rank_ok):
        # keep evaluation well-defined; degenerate points are masked later
        B = nk.Jet(np.where(rank_ok[:, None, None], B.val, np.eye(K, m)), B.grad)

    coords = [c.truncate() for c in comps]
    Phi = A.field_along("phi", coords)
    Xi = A.field_along("xi", coords)
    Eta = A.field_along("eta", coords)
    Gt = A.field_along("metric", coords)
    gam_amb = amb.christoffel(A, bvec.val).gamma

    GB = Gt @ B
    g = B.T @ GB
    ginv = nk.inv(g)

    # unit normal: project the chart axis that is furthest from the tangent space
    proj = B.val @ ginv.val @ np.swapaxes(GB.val, -1, -2)
    rest = np.eye(K) - proj
    lens = np.einsum("pka,pkl,pla->pa", rest, Gt.val, rest)
    E = np.eye(K)[np.argmax(lens, axis=-1)]
    coef = nk.contract("...ij,...j->...i", ginv, nk.contract("...ki,...k->...i", GB, E))
    n_raw = nk.contract("...ki,...i->...k", B, coef) * -1.0 + E
    nn = nk.contract("...k,...k->...", n_raw, nk.contract("...kl,...l->...k", Gt, n_raw))
    n_unit = n_raw / nk.sqrt(nn).expand(-1)
    eta_n0 = np.einsum("pk,pk->p", Eta.val, n_unit.val)
    sign = _orientation_sign(n_unit.val, eta_n0) * e.orientation
    n_unit = n_unit * sign[:, None]

    if e.normal_policy.kind == "scaled":
        sig = _jetify(e.normal_policy.sigma(xs), xs[0]).truncate()
        if np.any(sig.val <= 0.0):
            raise ConfigError("normal scaling sigma must be positive at every sample point")
    else:
        sig = nk.Jet.constant(np.ones(P), m, order=1)
    N = n_unit * sig.expand(-1)

    GN = nk.contract("...kl,...l->...k", Gt, N)
    c = nk.contract("...k,...k->...", N, GN)
    PhiB = Phi @ B
    u = nk.contract("...ki,...k->...i", PhiB, GN) / c.expand(-1)
    phi = ginv @ (GB.T @ PhiB)
    PhiN = nk.contract("...kl,...l->...k", Phi, N)
    phiN_normal = np.einsum("pk,pk->p", PhiN.val, GN.val) / c.val
    U = nk.contract("...ij,...j->...i", ginv, nk.contract("...ki,...k->...i", GB, PhiN)) * -1.0
    lam = nk.contract("...k,...k->...", Xi, GN) / c
    V = nk.contract("...ij,...j->...i", ginv, nk.contract("...ki,...k->...i", GB, Xi))
    v = nk.contract("...ki,...k->...i", B, Eta)
    etaN = nk.contract("...k,...k->...", Eta, N)

    # Gauss / Weingarten
    Bv, gv, giv, GNv, cv = B.val, g.val, ginv.val, GN.val, c.val
    cov_bb = d2b + np.einsum("pkab,pai,pbj->pkij", gam_amb, Bv, Bv)
    h = np.einsum("pkij,pk->pij", cov_bb, GNv) / cv[:, None, None]
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    gauss_tan = np.einsum("pab,pkb,pkl,plij->paij", giv, Bv, Gt.val, cov_bb)
    dN = np.moveaxis(N.grad, 0, -2)  # [p, i, k] = d_i N^k
    cov_n = dN + np.einsum("pkab,pai,pb->pik", gam_amb, Bv, N.val)
    w = np.einsum("pik,pk->pi", cov_n, GNv) / cv[:, None]
    HW = np.einsum("pab,pkb,pkl,pil->pai", giv, Bv, Gt.val, cov_n)
    H = giv @ h
    gamma = amb.christoffel_from_jet(g)

    return HypersurfaceData(
        s=s, b=bvec.val, B=B, d2b=d2b, rank_ok=rank_ok, N=N, c=c, sigma=sig, Gt=Gt,
        Phi=Phi, Xi=Xi, Eta=Eta, g=g, phi=phi, u=u, v=v, U=U, V=V, lam=lam, etaN=etaN,
        phiN_normal=phiN_normal, gamma_ambient=gam_amb, h=h, H=H, HW=HW, w=w, gamma=gamma,
        gauss_tangential=gauss_tan,
    )


# -- single-point operations ------------------------------------------------

def _single(e: Embedding, s) -> HypersurfaceData:
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise ValueError("expected a single parameter point")
    d = evaluate(e, s[None])
    if not d.rank_ok[0]:
        raise RankError(f"embedding Jacobian is rank deficient at {s.tolist()}")
    return d


def frame_at(e: Embedding, s) -> Frame:
    d = _single(e, s)
    Gt = d.Gt.val[0]
    basis = nk.gram_schmidt(list(d.B.val[0].T), Gt)
    return Frame(d.B.val[0], basis, d.N.val[0], float(d.etaN.val[0]), float(d.sigma.val[0]))


def induced_at(e: Embedding, s) -> InducedStructure:
    d = _single(e, s)
    if abs(d.phiN_normal[0]) > PHI_N_TOL:
        raise StructureError(f"phi N has normal component {d.phiN_normal[0]:.3e}")
    ind = d.induced()
    return InducedStructure(*(np.asarray(getattr(ind, f)[0]) for f in
                              ("phi", "u", "v", "Uvec", "Vvec", "lam", "g", "etaN", "c")))


def second_fundamental_at(e: Embedding, s) -> SecondFundamentalData:
    d = _single(e, s)
    return SecondFundamentalData(d.h[0], d.H[0], d.w[0], d.gamma[0])


def gauss_consistency(e: Embedding, s) -> float:
    return float(gauss_residual(_single(e, s))[0])


def derivative_identity_residuals(e: Embedding, s) -> dict[str, float]:
    return {k: float(v[0]) for k, v in derivative_residuals(_single(e, s)).items()}


def hu_residual(e: Embedding, s) -> tuple[float, float]:
    r = hu_residuals(_single(e, s))
    return float(r["hU"][0]), float(r["HU"][0])


# -- residual suites (batched) ---------------------------------------------

def probe_basis(m: int) -> np.ndarray:
    return amb.probe_basis(m, seed=PROBE_SEED)


def _inf(x, naxes):
    return np.abs(x).max(axis=tuple(range(-naxes, 0)))


def _probe_form(M, Pp):
    """max over probe pairs |X^T M Y| for bilinear-form arrays M."""
    return _inf(np.einsum("...ab,ax,by->...xy", M, Pp, Pp), 2)


def _probe_op(M, Pp):
    """max over probes of |M X|."""
    return _inf(np.einsum("...ab,bx->...ax", M, Pp), 2)


def _probe_cov(x, Pp):
    return _inf(np.einsum("...a,ax->...x", x, Pp), 1)


def split_residuals(d: HypersurfaceData) -> dict[str, np.ndarray]:
    """How well the frame decomposition reproduces the ambient data."""
    B, N = d.B.val, d.N.val
    Pp = probe_basis(B.shape[-1])
    PhiB = d.Phi.val @ B
    recon = PhiB - B @ d.phi.val - N[..., :, None] * d.u.val[..., None, :]
    GB = d.Gt.val @ B
    return {
        "normal_orthogonal": _inf(np.einsum("pki,pk->pi", GB, N), 1),
        "normal_length": np.abs(d.c.val - d.sigma.val**2),
        "phi_N_tangent": np.abs(d.phiN_normal),
        "split_phi": _inf(np.einsum("pki,ix->pkx", recon, Pp), 2),
        "split_phi_N": _inf(np.einsum("pkl,pl->pk", d.Phi.val, N) + np.einsum("pki,pi->pk", B, d.U.val), 1),
        "split_xi": _inf(d.Xi.val - np.einsum("pki,pi->pk", B, d.V.val) - d.lam.val[:, None] * N, 1),
        "split_eta": _probe_cov(np.einsum("pki,pk->pi", B, d.Eta.val) - d.v.val, Pp),
    }


def structure_residuals(ind: InducedStructure, tol: float = 1e-7,
                        degenerate_tol: float = 1e-6) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Algebraic identities of the induced structure.

    Returns ``name -> (residual, evaluated_mask)``.  The block that
    assumes ``eta(N) = lambda`` is only evaluated where that holds, and its
    ``u(U)``, ``v(V)`` entries are skipped where ``1 - lambda^2`` vanishes.
    """
    phi, u, v, U, V = (np.asarray(x) for x in (ind.phi, ind.u, ind.v, ind.Uvec, ind.Vvec))
    lam, g, etaN = np.asarray(ind.lam), np.asarray(ind.g), np.asarray(ind.etaN)
    c = np.broadcast_to(np.asarray(ind.c, float), lam.shape)
    m = phi.shape[-1]
    eye = np.eye(m)
    Pp = probe_basis(m)
    lam_ = lam[..., None]
    etaN_ = etaN[..., None]
    dot = lambda a, b: np.einsum("...i,...i->...", a, b)
    uphi = np.einsum("...c,...cb->...b", u, phi)
    vphi = np.einsum("...c,...cb->...b", v, phi)
    phiU = np.einsum("...ac,...c->...a", phi, U)
    phiV = np.einsum("...ac,...c->...a", phi, V)
    sq = phi @ phi + eye - U[..., :, None] * u[..., None, :] - V[..., :, None] * v[..., None, :]
    met = (np.swapaxes(phi, -1, -2) @ g @ phi - g + c[..., None, None] * u[..., :, None] * u[..., None, :]
           + v[..., :, None] * v[..., None, :])
    everywhere = np.ones(lam.shape, dtype=bool)
    out = {
        "phi_squared": (_probe_op(sq, Pp), everywhere),
        "u_phi": (_probe_cov(uphi - lam_ * v, Pp), everywhere),
        "v_phi": (_probe_cov(vphi + etaN_ * u, Pp), everywhere),
        "phi_U": (np.abs(phiU + etaN_ * V).max(-1), everywhere),
        "phi_V": (np.abs(phiV - lam_ * U).max(-1), everywhere),
        "u_U": (np.abs(dot(u, U) - (1.0 - lam * etaN)), everywhere),
        "u_V": (np.abs(dot(u, V)), everywhere),
        "v_U": (np.abs(dot(v, U)), everywhere),
        "v_V": (np.abs(dot(v, V) - (1.0 - lam * etaN)), everywhere),
        "metric_phi": (_probe_form(met, Pp), everywhere),
        "U_dual": (_probe_cov(np.einsum("...ab,...a->...b", g, U) - c[..., None] * u, Pp), everywhere),
        "V_dual": (_probe_cov(np.einsum("...ab,...a->...b", g, V) - v, Pp), everywhere),
    }
    std = np.abs(etaN - lam) <= tol
    nondeg = std & (np.abs(1.0 - lam**2) > degenerate_tol)
    out.update({
        "std_phi_squared": (_probe_op(sq, Pp), std),
        "std_phi_U": (np.abs(phiU + lam_ * V).max(-1), std),
        "std_phi_V": (np.abs(phiV - lam_ * U).max(-1), std),
        "std_u_phi": (_probe_cov(uphi - lam_ * v, Pp), std),
        "std_v_phi": (_probe_cov(vphi + lam_ * u, Pp), std),
        "std_u_U": (np.abs(dot(u, U) - (1.0 - lam**2)), nondeg),
        "std_u_V": (np.abs(dot(u, V)), std),
        "std_v_U": (np.abs(dot(v, U)), std),
        "std_v_V": (np.abs(dot(v, V) - (1.0 - lam**2)), nondeg),
    })
    return out


def gauss_residual(d: HypersurfaceData) -> np.ndarray:
    """Tangential part of nabla~_{B d_i} B d_j versus the Levi-Civita
    connection of the pulled-back metric (computed from its own jets)."""
    return _inf(d.gauss_tangential - d.gamma, 3)


def weingarten_residual(d: HypersurfaceData) -> np.ndarray:
    """H_W + c H (tangential Weingarten operator vs shape operator)."""
    return _inf(d.HW + d.c.val[:, None, None] * d.H, 2)


def covariant_derivatives(d: HypersurfaceData) -> dict[str, np.ndarray]:
    """Covariant derivatives of the induced fields along coordinate fields.

    Index layout: ``nabla_phi[p, j, a, b] = (nabla_j phi)^a_b``,
    ``nabla_u[p, j, b]``, ``nabla_U[p, j, a]``, ``dlam[p, j]``.
    """
    G = d.gamma  # [p, a, i, j]
    phi = d.phi.val
    dphi = np.moveaxis(d.phi.grad, 0, 1)
    nphi = (dphi + np.einsum("pajc,pcb->pjab", G, phi) - np.einsum("pcjb,pac->pjab", G, phi))

    def cov1form(x):
        return np.moveaxis(x.grad, 0, 1) - np.einsum("pcjb,pc->pjb", G, x.val)

    def covvec(x):
        return np.moveaxis(x.grad, 0, 1) + np.einsum("pajc,pc->pja", G, x.val)

    return {
        "phi": nphi,
        "u": cov1form(d.u),
        "v": cov1form(d.v),
        "U": covvec(d.U),
        "V": covvec(d.V),
        "dlam": np.moveaxis(d.lam.grad, 0, 1),
    }


def derivative_rhs(d: HypersurfaceData, h: np.ndarray | None = None, H: np.ndarray | None = None):
    """Right-hand sides of the covariant-derivative identities.

    ``h`` and ``H`` default to the true second fundamental data; passing a
    model second fundamental form gives the substituted versions.
    """
    h = d.h if h is None else h
    H = d.H if H is None else H
    g, phi = d.g.val, d.phi.val
    u, v, U, V = d.u.val, d.v.val, d.U.val, d.V.val
    lam, c, w = d.lam.val, d.c.val, d.w
    dlam = np.moveaxis(d.lam.grad, 0, 1)
    m = g.shape[-1]
    eye = np.eye(m)
    cl = (c * lam)[:, None, None]
    return {
        # (nabla_j phi)^a_b = g_bj V^a - v_b delta^a_j - h_bj U^a + c u_b H^a_j
        "phi": (np.einsum("pbj,pa->pjab", g, V) - np.einsum("pb,aj->pjab", v, eye)
                - np.einsum("pbj,pa->pjab", h, U) + c[:, None, None, None] * np.einsum("pb,paj->pjab", u, H)),
        # (nabla_j u)_b = lam g_bj - h(phi d_b, d_j) - u_b w_j
        "u": (lam[:, None, None] * np.swapaxes(g, -1, -2) - np.einsum("pcb,pcj->pjb", phi, h)
              - np.einsum("pb,pj->pjb", u, w)),
        # (nabla_j v)_b = -g(phi d_j, d_b) + c lam h_bj
        "v": -np.einsum("pcj,pcb->pjb", phi, g) + cl * np.swapaxes(h, -1, -2),
        # nabla_j U = w_j U + c phi H d_j + c lam d_j
        "U": (np.einsum("pj,pa->pja", w, U) + c[:, None, None] * np.einsum("pac,pcj->pja", phi, H)
              + cl * eye),
        # nabla_j V = -phi d_j + c lam H d_j
        "V": -np.swapaxes(phi, -1, -2) + cl * np.swapaxes(H, -1, -2),
        # h(d_j, V) = -u_j - d_j lam - lam w_j
        "hV": -u - dlam - lam[:, None] * w,
        # h(d_j, U) = c u(H d_j)
        "hU": c[:, None] * np.einsum("pa,paj->pj", u, H),
    }


def derivative_residuals(d: HypersurfaceData, h: np.ndarray | None = None,
                         H: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Max-abs residuals of the covariant-derivative identities, using the
    coordinate fields d/ds_j as probes."""
    h_used = d.h if h is None else h
    cov = covariant_derivatives(d)
    rhs = derivative_rhs(d, h, H)
    return {
        "cov_phi": _inf(cov["phi"] - rhs["phi"], 3),
        "cov_u": _inf(cov["u"] - rhs["u"], 2),
        "cov_v": _inf(cov["v"] - rhs["v"], 2),
        "cov_U": _inf(cov["U"] - rhs["U"], 2),
        "cov_V": _inf(cov["V"] - rhs["V"], 2),
        "h_V": _inf(np.einsum("pjc,pc->pj", h_used, d.V.val) - rhs["hV"], 1),
        "h_U": _inf(np.einsum("pjc,pc->pj", h_used, d.U.val) - rhs["hU"], 1),
    }


def hu_residuals(d: HypersurfaceData) -> dict[str, np.ndarray]:
    """(max_Y |h(Y, U)|, |H U|): the vanishing of h(., U) and of HU."""
    return {
        "hU": _inf(np.einsum("pjc,pc->pj", d.h, d.U.val), 1),
        "HU": _inf(np.einsum("pac,pc->pa", d.H, d.U.val), 1),
    }


def normal_connection_residual(d: HypersurfaceData, dlog_sigma: np.ndarray) -> np.ndarray:
    """|w - d log sigma| componentwise."""
    return _inf(d.w - dlog_sigma, 1)


def dlog_sigma(e: Embedding, s) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if e.normal_policy.kind == "unit":
        return np.zeros_like(s)
    xs = nk.Jet.variables(s, order=1)
    sig = _jetify(e.normal_policy.sigma(xs), xs[0])
    return np.moveaxis(sig.grad, 0, -1) / sig.val[:, None]


# -- finite-difference oracle ----------------------------------------------

ORACLE_FIELDS = ("g", "phi", "u", "v", "U", "V", "lam")
NORMAL_ODD_FIELDS = ("u", "U", "lam")


def _branch_sign(base: HypersurfaceData, other: HypersurfaceData) -> np.ndarray:
    """+-1 per point so that ``other`` uses the normal branch of ``base``.

    The orientation rule is pointwise and flips N where eta(N) changes
    sign; a difference quotient must not straddle that flip.
    """
    dots = np.einsum("pk,pkl,pl->p", other.N.val, base.Gt.val, base.N.val)
    return np.where(dots < 0, -1.0, 1.0)


def oracle_agreement(e: Embedding, s, step: float = nk.DEFAULT_FD_STEP) -> dict[str, np.ndarray]:
    """Per-field max |autodiff - central difference| of the parameter
    derivatives of the induced fields."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    base = evaluate(e, s)
    m = s.shape[1]
    out = {f: np.zeros(s.shape[0]) for f in ORACLE_FIELDS}
    for j in range(m):
        ds = np.zeros(m)
        ds[j] = step
        plus, minus = evaluate(e, s + ds), evaluate(e, s - ds)
        sp, sm = _branch_sign(base, plus), _branch_sign(base, minus)
        for f in ORACLE_FIELDS:
            vp, vm = getattr(plus, f).val, getattr(minus, f).val
            if f in NORMAL_ODD_FIELDS:
                vp = vp * sp.reshape((-1,) + (1,) * (vp.ndim - 1))
                vm = vm * sm.reshape((-1,) + (1,) * (vm.ndim - 1))
            fd = (vp - vm) / (2.0 * step)
            ad = getattr(base, f).grad[j]
            diff = np.abs(fd - ad).reshape(s.shape[0], -1).max(axis=1)
            out[f] = np.maximum(out[f], diff)
    return out


# -- invariance report -------------------------------------------------------

def u_norms(d: HypersurfaceData) -> np.ndarray:
    """Metric norm |u|_g at each point."""
    ginv = np.linalg.inv(d.g.val)
    return np.sqrt(np.einsum("pa,pab,pb->p", d.u.val, ginv, d.u.val))


@dataclass(frozen=True)
class NoninvarianceReport:
    max_u_norm: float
    min_u_norm: float
    label: str  # invariant, noninvariant, mixed
    offending: list


def noninvariance_check(e: Embedding, samples, tol: float = 1e-8) -> NoninvarianceReport:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    norms = u_norms(evaluate(e, samples))
    small = norms <= tol
    if np.all(small):
        label = "invariant"
    elif not np.any(small):
        label = "noninvariant"
    else:
        label = "mixed"
    offending = [samples[i].tolist() for i in np.flatnonzero(small)[:10]] if label == "mixed" else []
    return NoninvarianceReport(float(norms.max()), float(norms.min()), label, offending)
