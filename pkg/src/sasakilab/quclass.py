"""Quasi-umbilical fits ``h = alpha g + beta q (x) q`` and the identities
that follow from them.

A fit reads the spectrum of the shape operator ``H = g^-1 h``: a
quasi-umbilical ``h`` has one eigenvalue (``alpha``) of multiplicity at
least ``dim - 1`` and one more (``alpha + beta``) whose g-unit
eigenvector is ``Q``; ``q = g(Q, .)``.

Residual functions here return :class:`PointResidual` values that carry
a per-point residual, a mask of evaluated points and the reason for the
others, so the report can show skips instead of silently passing them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hypersurface as hs
from . import numkit as nk
from .errors import NumericError, PreconditionError

TOTALLY_GEODESIC = "TotallyGeodesic"
TOTALLY_UMBILICAL = "TotallyUmbilical"
CYLINDRICAL = "Cylindrical"
QUASI_UMBILICAL = "QuasiUmbilical"
GENERIC = "Generic"
LABELS = (TOTALLY_GEODESIC, TOTALLY_UMBILICAL, CYLINDRICAL, QUASI_UMBILICAL, GENERIC)

CLUSTER_RTOL = 1e-5
CLUSTER_ATOL = 1e-12
FIT_TOL = 1e-8
LAMBDA_GUARD = 1e-6


@dataclass(frozen=True)
class QUDecomposition:
    """Fitted (alpha, beta, q, Q).  Fields may carry a leading batch axis,
    in which case ``classification`` is an array of labels."""

    alpha: np.ndarray
    beta: np.ndarray
    q: np.ndarray
    Q: np.ndarray
    fit_residual: np.ndarray
    classification: object

    def __len__(self):
        return np.shape(self.alpha)[0] if np.ndim(self.alpha) else 1

    def at(self, i: int) -> "QUDecomposition":
        return QUDecomposition(float(self.alpha[i]), float(self.beta[i]), self.q[i], self.Q[i],
                               float(self.fit_residual[i]), str(self.classification[i]))

    def model_h(self, g) -> np.ndarray:
        """alpha g + beta q (x) q."""
        a = np.asarray(self.alpha, float)[..., None, None]
        b = np.asarray(self.beta, float)[..., None, None]
        q = np.asarray(self.q)
        return a * g + b * q[..., :, None] * q[..., None, :]

    def model_H(self) -> np.ndarray:
        """alpha I + beta Q (x) q."""
        m = np.shape(self.q)[-1]
        a = np.asarray(self.alpha, float)[..., None, None]
        b = np.asarray(self.beta, float)[..., None, None]
        Q, q = np.asarray(self.Q), np.asarray(self.q)
        return a * np.eye(m) + b * Q[..., :, None] * q[..., None, :]


@dataclass(frozen=True)
class PointResidual:
    values: np.ndarray
    evaluated: np.ndarray
    reason: str = ""
    gating: bool = True

    @classmethod
    def everywhere(cls, values, gating: bool = True) -> "PointResidual":
        values = np.asarray(values, float)
        return cls(values, np.ones(values.shape, bool), "", gating)

    @classmethod
    def skipped(cls, npoints: int, reason: str, gating: bool = True) -> "PointResidual":
        return cls(np.zeros(npoints), np.zeros(npoints, bool), reason, gating)


# -- classification ---------------------------------------------------------

def classify_values(alpha, beta, fit_residual, tol: float = FIT_TOL) -> np.ndarray:
    alpha, beta, res = (np.asarray(x, float) for x in (alpha, beta, fit_residual))
    a0, b0 = np.abs(alpha) <= tol, np.abs(beta) <= tol
    out = np.where(a0 & b0, TOTALLY_GEODESIC,
                   np.where(b0, TOTALLY_UMBILICAL, np.where(a0, CYLINDRICAL, QUASI_UMBILICAL)))
    return np.where(res > tol, GENERIC, out)


def classify(d: QUDecomposition, tol: float = FIT_TOL):
    out = classify_values(d.alpha, d.beta, d.fit_residual, tol)
    return str(out) if out.ndim == 0 else out


# -- fitting ----------------------------------------------------------------

def _fix_sign(q):
    scale = np.abs(q).max(axis=-1, keepdims=True)
    nz = np.abs(q) > 1e-12 * np.maximum(scale, 1e-300)
    first = np.take_along_axis(q, np.argmax(nz, axis=-1)[..., None], axis=-1)
    return np.where(first < 0, -1.0, 1.0)


def _is_cluster(vals, scale):
    spread = vals.max(axis=-1) - vals.min(axis=-1)
    return spread <= CLUSTER_RTOL * scale + CLUSTER_ATOL


def fit_quasi_umbilical(h, g, tol: float = FIT_TOL) -> QUDecomposition:
    """Fit ``h = alpha g + beta q (x) q`` (single matrix or a stack).

    The isolated eigenvalue may sit at either end of the spectrum.  In
    dimension 2 both eigenvalues form "clusters"; there the eigenvalue
    closer to zero within ``tol`` becomes ``alpha`` (a cylindrical reading),
    and otherwise the smaller one does, so ``beta >= 0``.  Without a
    cluster the split with the smaller residual is returned and labelled
    Generic.
    """
    h = np.asarray(h, float)
    g = np.asarray(g, float)
    single = h.ndim == 2
    if single:
        h, g = h[None], g[None]
    m = h.shape[-1]
    H = np.linalg.solve(g, h)
    eig = nk.sym_eigen_pair(H, g, tol=max(tol, 1e-8))
    mu, vec = eig.values, eig.vectors
    scale = np.abs(mu).max(axis=-1)

    # split "top": odd eigenvalue is the largest; "bottom": the smallest
    top_ok = _is_cluster(mu[:, :-1], scale)
    bot_ok = _is_cluster(mu[:, 1:], scale)
    top = (mu[:, :-1].mean(-1), mu[:, -1], vec[:, :, -1])
    bot = (mu[:, 1:].mean(-1), mu[:, 0], vec[:, :, 0])

    def residual(alpha, odd, Qv):
        q = np.einsum("pab,pa->pb", g, Qv)
        model = alpha[:, None, None] * g + (odd - alpha)[:, None, None] * q[:, :, None] * q[:, None, :]
        return np.abs(h - model).max(axis=(-1, -2))

    r_top, r_bot = residual(*top), residual(*bot)
    use_bot = np.where(top_ok & bot_ok, False, bot_ok & ~top_ok)
    neither = ~top_ok & ~bot_ok
    use_bot = np.where(neither, r_bot < r_top, use_bot)
    if m == 2:
        # both splits are admissible: prefer a (near) zero alpha, else alpha = min
        use_bot = (np.abs(mu[:, 1]) <= tol) & (np.abs(mu[:, 0]) > tol)
    alpha = np.where(use_bot, bot[0], top[0])
    odd = np.where(use_bot, bot[1], top[1])
    Q = np.where(use_bot[:, None], bot[2], top[2])
    q = np.einsum("pab,pa->pb", g, Q)
    sgn = _fix_sign(q)
    q, Q = q * sgn, Q * sgn
    beta = odd - alpha
    all_equal = top_ok & bot_ok & (m > 2)
    beta = np.where(all_equal, 0.0, beta)
    alpha = np.where(all_equal, mu.mean(-1), alpha)
    model = alpha[:, None, None] * g + beta[:, None, None] * q[:, :, None] * q[:, None, :]
    fit_res = np.abs(h - model).max(axis=(-1, -2))
    labels = classify_values(alpha, beta, fit_res, tol)
    labels = np.where(neither, GENERIC, labels)
    if single:
        return QUDecomposition(float(alpha[0]), float(beta[0]), q[0], Q[0], float(fit_res[0]), str(labels[0]))
    return QUDecomposition(alpha, beta, q, Q, fit_res, labels)


def synthetic_h(alpha, beta, q, g) -> np.ndarray:
    q = np.asarray(q, float)
    return alpha * np.asarray(g, float) + beta * np.outer(q, q)


def unit_covector(vec, g) -> np.ndarray:
    """g(X, .) / |X|_g for a vector X (batched)."""
    cov = np.einsum("...ab,...a->...b", g, vec)
    norm2 = np.einsum("...a,...a->...", cov, vec)
    if np.any(~(norm2 > 0.0)):
        raise NumericError("cannot normalize a zero vector")
    return cov / np.sqrt(norm2)[..., None]


def decomposition_from(alpha, beta, q, g, tol: float = FIT_TOL) -> QUDecomposition:
    """Exact decomposition from given (alpha, beta, q): Q is the g-dual of q."""
    g = np.asarray(g, float)
    q = np.asarray(q, float)
    P = q.shape[0]
    alpha = np.broadcast_to(np.asarray(alpha, float), (P,)).copy()
    beta = np.broadcast_to(np.asarray(beta, float), (P,)).copy()
    Q = np.linalg.solve(g, q[..., None])[..., 0]
    res = np.zeros(P)
    return QUDecomposition(alpha, beta, q, Q, res, classify_values(alpha, beta, res, tol))


def enforced_decomposition(d: hs.HypersurfaceData, alpha: float) -> QUDecomposition:
    """Quasi-umbilical data with ``h(., U) = 0`` built in: q = g(U, .)/|U|
    and beta = -alpha.  Defined where U != 0."""
    q = unit_covector(d.U.val, d.g.val)
    return decomposition_from(alpha, -alpha, q, d.g.val)


def fit_hypersurface(d: hs.HypersurfaceData, tol: float = FIT_TOL) -> QUDecomposition:
    return fit_quasi_umbilical(d.h, d.g.val, tol)


# -- section-3 identity residuals ------------------------------------------

def _not_generic(dec: QUDecomposition) -> np.ndarray:
    return np.asarray(dec.classification) != GENERIC


def qu_identity_residuals(d: hs.HypersurfaceData, dec: QUDecomposition,
                          tol: float = FIT_TOL) -> dict[str, PointResidual]:
    """Covariant-derivative identities with ``h`` replaced by the fitted
    model, plus the algebraic consequences of quasi-umbilicity."""
    ok = _not_generic(dec)
    why = "skipped: fit is Generic"
    hm, Hm = dec.model_h(d.g.val), dec.model_H()
    sub = hs.derivative_residuals(d, hm, Hm)
    out = {}
    for name, key in (("cov_phi_fitted", "cov_phi"), ("cov_u_fitted", "cov_u"), ("cov_v_fitted", "cov_v"),
                      ("cov_U_fitted", "cov_U"), ("cov_V_fitted", "cov_V"), ("h_V_fitted", "h_V")):
        out[name] = PointResidual(sub[key], ok, why)

    lam, c = d.lam.val, d.c.val
    u, v, g, phi = d.u.val, d.v.val, d.g.val, d.phi.val
    Q, q, U = np.asarray(dec.Q), np.asarray(dec.q), d.U.val
    alpha, beta = np.asarray(dec.alpha, float), np.asarray(dec.beta, float)
    uQ = np.einsum("pa,pa->p", u, Q)
    qU = np.einsum("pa,pa->p", q, U)
    beta_ok = ok & (np.abs(beta) > tol)
    safe_beta = np.where(beta_ok, beta, 1.0)
    target = -(alpha / safe_beta) * (1.0 - c * lam**2) / c
    out["u_Q_squared"] = PointResidual(np.abs(uQ**2 - target), beta_ok, "skipped: beta ~ 0 or Generic")
    cyl = np.asarray(dec.classification) == CYLINDRICAL
    vphiQ = np.einsum("pa,pab,pb->p", v, phi, Q)
    out["v_phi_Q"] = PointResidual(np.abs(vphiQ), cyl, "skipped: not Cylindrical")
    # u(Q) = 0 <=> q(U) = 0, checked as |q(U) - c u(Q)| and as a biconditional
    out["q_U_vs_u_Q"] = PointResidual(np.abs(qU - c * uQ), ok, why)
    bicond = np.where((np.abs(uQ) <= tol) == (np.abs(qU) <= tol), 0.0, np.maximum(np.abs(uQ), np.abs(qU)))
    out["q_U_u_Q_equivalence"] = PointResidual(bicond, ok, why)
    return out


def theorem31_residuals(d: hs.HypersurfaceData, dec: QUDecomposition, tol: float = FIT_TOL,
                        lambda_guard: float = LAMBDA_GUARD) -> dict[str, PointResidual]:
    """Parts (a)-(c) of the structure theorem for quasi-umbilical
    noninvariant hypersurfaces, and the key step of its proof."""
    ok = _not_generic(dec)
    lam, c, w = d.lam.val, d.c.val, d.w
    U, V, u, g = d.U.val, d.V.val, d.u.val, d.g.val
    Q, q = np.asarray(dec.Q), np.asarray(dec.q)
    alpha, beta = np.asarray(dec.alpha, float), np.asarray(dec.beta, float)
    v = d.v.val
    dlam = np.moveaxis(d.lam.grad, 0, -1)
    Ulam = np.einsum("pj,pj->p", dlam, U)
    Vlam = np.einsum("pj,pj->p", dlam, V)
    wU = np.einsum("pj,pj->p", w, U)
    wV = np.einsum("pj,pj->p", w, V)
    lam_ok = ok & (np.abs(lam) > lambda_guard)
    safe = np.where(lam_ok, lam, 1.0)
    one_minus = 1.0 - c * lam**2
    Pp = hs.probe_basis(g.shape[-1])
    qU = np.einsum("pa,pa->p", q, U)
    step = np.einsum("p,pa,ax->px", alpha * c, u, Pp) + np.einsum("p,pa,ax->px", beta * qU, q, Pp)
    gen = "skipped: fit is Generic"
    lam_reason = "skipped: lambda ~ 0 or Generic"
    return {
        "q_of_V": PointResidual(np.abs(np.einsum("pa,pa->p", q, V)), ok, gen),
        "v_of_Q": PointResidual(np.abs(np.einsum("pa,pa->p", v, Q)), ok, gen),
        "w_of_U": PointResidual(np.abs(wU + one_minus / safe + Ulam / safe), lam_ok, lam_reason),
        "w_of_V": PointResidual(np.abs(wV + alpha * one_minus / safe + Vlam / safe), lam_ok, lam_reason),
        "h_U_from_fit": PointResidual(np.abs(step).max(-1), ok, gen),
    }


def unit_normal_consequence(d: hs.HypersurfaceData, lambda_guard: float = LAMBDA_GUARD) -> PointResidual:
    """|U lambda + (1 - lambda^2)|: part (b) with w = 0 and a unit normal."""
    dlam = np.moveaxis(d.lam.grad, 0, -1)
    Ulam = np.einsum("pj,pj->p", dlam, d.U.val)
    lam = d.lam.val
    return PointResidual(np.abs(Ulam + (1.0 - lam**2)), np.abs(lam) > lambda_guard, "skipped: lambda ~ 0")


@dataclass(frozen=True)
class Theorem32Result:
    primary: PointResidual
    diagnostic: PointResidual = field(default=None)


def theorem32_residual(d: hs.HypersurfaceData, dec: QUDecomposition,
                       lambda_guard: float = LAMBDA_GUARD) -> Theorem32Result:
    """w = -d log(lambda) on cylindrical hypersurfaces.

    The V component is the gating check; the full one-form residual is
    reported alongside as a non-gating diagnostic.
    """
    labels = np.atleast_1d(np.asarray(dec.classification))
    if np.any(labels != CYLINDRICAL):
        raise PreconditionError(
            f"{int(np.sum(labels != CYLINDRICAL))} sample point(s) are not Cylindrical")
    lam = d.lam.val
    P = lam.shape[0]
    if np.any(lam > lambda_guard) and np.any(lam < -lambda_guard):
        reason = "skipped: log lambda undefined (lambda changes sign)"
        return Theorem32Result(PointResidual.skipped(P, reason), PointResidual.skipped(P, reason, False))
    ok = np.abs(lam) > lambda_guard
    safe = np.where(ok, lam, 1.0)
    dlog = np.moveaxis(d.lam.grad, 0, -1) / safe[:, None]
    full = d.w + dlog
    primary = np.abs(np.einsum("pj,pj->p", full, d.V.val))
    reason = "skipped: lambda ~ 0"
    return Theorem32Result(PointResidual(primary, ok, reason),
                           PointResidual(np.abs(full).max(-1), ok, reason, gating=False))
