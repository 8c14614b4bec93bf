"""Orchestration: run the selected suites over a manifest's samples."""

from __future__ import annotations

import dataclasses
from collections import Counter
from datetime import datetime, timezone

import numpy as np

from . import ambient as amb
from . import hypersurface as hs
from . import models
from . import numkit as nk
from . import quclass as qc
from .errors import ConfigError, PreconditionError, SasakiLabError
from .manifest import AMBIENT_POINTS, Manifest
from .report import Record, Report, error_record, make_record, skipped_record

HYPERSURFACE_SUITES = ("structure", "derivative", "quclass", "theorem31", "theorem32")
DEGENERATE = "skipped: degenerate (rank-deficient Jacobian)"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_ambient(m: Manifest):
    A = models.model_by_name(m.model)
    if m.test_hooks is not None and m.test_hooks.xi_scale is not None:
        A = A.with_scaled_xi(m.test_hooks.xi_scale)
    return A


def build_embedding(m: Manifest, A=None) -> hs.Embedding:
    A = build_ambient(m) if A is None else A
    return hs.Embedding.from_strings(A, m.embedding, m.normal_policy_json(), m.orientation)


# -- ambient suite ------------------------------------------------------------

def ambient_records(A, points, tol: float) -> list[Record]:
    res = amb.all_residuals(A, points)
    res["levi_civita_compat"] = amb.metric_compatibility_residual(A, points)
    return [make_record("ambient", name, vals, points, tol) for name, vals in res.items()]


def run_ambient(model: str, seed: int, npoints: int = AMBIENT_POINTS, tol: float = 1e-8,
                xi_scale: float | None = None, timestamp: str | None = None) -> Report:
    A = models.model_by_name(model)
    if xi_scale is not None:
        A = A.with_scaled_xi(xi_scale)
    pts = models.self_check_points(A.dim, npoints, seed)
    report = Report(ambient_records(A, pts, tol))
    report.config = {"model": model, "seed": seed, "points": npoints, "tolerances": {"ambient": tol}}
    report.timestamp = _now() if timestamp is None else timestamp
    return report


# -- robust hypersurface evaluation ------------------------------------------

class Evaluation:
    """Hypersurface data on the points where evaluation succeeded.

    ``idx`` maps rows of ``data`` back to sample indices; ``errors`` holds
    (sample index, message) for the points that raised.
    """

    def __init__(self, e: hs.Embedding, S: np.ndarray):
        self.S = S
        self.P = S.shape[0]
        self.errors: list[tuple[int, str]] = []
        try:
            self.data = hs.evaluate(e, S)
            self.idx = np.arange(self.P)
        except ConfigError:
            raise
        except SasakiLabError:
            good = []
            for i in range(self.P):
                try:
                    hs.evaluate(e, S[i:i + 1])
                    good.append(i)
                except ConfigError:
                    raise
                except SasakiLabError as exc:
                    self.errors.append((i, f"{type(exc).__name__}: {exc}"))
            self.idx = np.array(good, dtype=int)
            self.data = hs.evaluate(e, S[self.idx]) if good else None
        self.valid = np.zeros(self.P, bool)
        if self.data is not None:
            self.valid[self.idx] = self.data.rank_ok

    def scatter(self, values) -> np.ndarray:
        out = np.zeros(self.P)
        out[self.idx] = values
        return out

    def mask(self, sub_mask=None) -> np.ndarray:
        out = np.zeros(self.P, bool)
        if self.data is None:
            return out
        sub = np.ones(len(self.idx), bool) if sub_mask is None else np.asarray(sub_mask, bool)
        out[self.idx] = sub & self.data.rank_ok
        return out


def _record(ev: Evaluation, suite: str, name: str, values, tol: float,
            sub_mask=None, reason: str = "") -> Record:
    mask = ev.mask(sub_mask)
    if sub_mask is not None and reason and not np.all(sub_mask):
        why = reason
    elif not ev.valid.all():
        why = DEGENERATE if not ev.errors else "skipped: evaluation error"
    else:
        why = reason
    return make_record(suite, name, ev.scatter(values), ev.S, tol, mask, why)


def _residual_record(ev: Evaluation, suite: str, name: str, r: qc.PointResidual, tol: float) -> Record:
    return _record(ev, suite, name, r.values, tol, r.evaluated, r.reason)


# -- verification -------------------------------------------------------------

def run_verification(m: Manifest, timestamp: str | None = None) -> Report:
    """Run every selected suite; module errors become failing records."""
    A = build_ambient(m)
    tol = m.all_tolerances()
    S = m.sample_points()
    report = Report()
    report.config = {
        "model": m.model,
        "embedding": list(m.embedding),
        "normal_policy": m.normal_policy_json(),
        "orientation": m.orientation,
        "seed": m.seed,
        "tolerances": tol,
        "suites": list(m.suites),
        "n_samples": int(S.shape[0]),
    }
    if m.test_hooks is not None and m.test_hooks.xi_scale is not None:
        report.config["test_hooks"] = {"xi_scale": m.test_hooks.xi_scale}
    report.timestamp = _now() if timestamp is None else timestamp

    if "ambient" in m.suites:
        pts = models.self_check_points(A.dim, AMBIENT_POINTS, m.seed)
        report.records.extend(ambient_records(A, pts, tol["ambient"]))

    wanted = [s for s in HYPERSURFACE_SUITES if s in m.suites]
    if not wanted:
        return report
    e = build_embedding(m, A)
    ev = Evaluation(e, S)
    if ev.errors:
        i, msg = ev.errors[0]
        report.records.append(error_record(
            wanted[0], "evaluation", f"{len(ev.errors)} point(s) failed; first: {msg}", S[i],
            n_points=len(ev.errors)))
    if ev.data is None:
        return report
    d = ev.data
    norms = hs.u_norms(d)
    u_tol = 1e-8
    report.info["invariance"] = ("invariant" if np.all(norms <= u_tol) else
                                 "noninvariant" if np.all(norms > u_tol) else "mixed")

    if "structure" in m.suites:
        report.records.extend(_structure_records(ev, tol))
    if "derivative" in m.suites:
        report.records.extend(_derivative_records(ev, e, tol))
    if any(s in m.suites for s in ("quclass", "theorem31", "theorem32")):
        dec = qc.fit_hypersurface(d, tol["fit"])
        labels = np.asarray(dec.classification)[d.rank_ok]
        report.info["classification"] = dict(sorted(Counter(str(x) for x in labels).items()))
        if "quclass" in m.suites:
            for name, r in qc.qu_identity_residuals(d, dec, tol["fit"]).items():
                report.records.append(_residual_record(ev, "quclass", name, r, tol["quclass"]))
        if "theorem31" in m.suites:
            res = qc.theorem31_residuals(d, dec, tol["fit"], tol["lambda_guard"])
            if e.normal_policy.kind == "unit":
                res["U_lambda_unit_normal"] = qc.unit_normal_consequence(d, tol["lambda_guard"])
            for name, r in res.items():
                report.records.append(_residual_record(ev, "theorem31", name, r, tol["theorem"]))
        if "theorem32" in m.suites:
            _theorem32(report, ev, dec, tol)
    return report


def _structure_records(ev: Evaluation, tol: dict) -> list[Record]:
    d = ev.data
    t = tol["structure"]
    out = [_record(ev, "structure", name, vals, t) for name, vals in hs.split_residuals(d).items()]
    res = hs.structure_residuals(d.induced(), t, tol["lambda_guard"])
    for name, (vals, mask) in res.items():
        reason = ""
        if name.startswith("std_"):
            reason = "skipped: eta(N) differs from lambda or 1 - lambda^2 ~ 0"
        out.append(_record(ev, "structure", name, vals, t, mask, reason))
    return out


def _derivative_records(ev: Evaluation, e: hs.Embedding, tol: dict) -> list[Record]:
    d = ev.data
    t = tol["derivative"]
    out = [_record(ev, "derivative", name, vals, t) for name, vals in hs.derivative_residuals(d).items()]
    hu = hs.hu_residuals(d)
    out.append(_record(ev, "derivative", "hU_vanishes", hu["hU"], t))
    out.append(_record(ev, "derivative", "HU_vanishes", hu["HU"], t))
    out.append(_record(ev, "derivative", "gauss", hs.gauss_residual(d), t))
    out.append(_record(ev, "derivative", "weingarten", hs.weingarten_residual(d), t))
    S_ok = ev.S[ev.idx]
    out.append(_record(ev, "derivative", "normal_connection",
                       hs.normal_connection_residual(d, hs.dlog_sigma(e, S_ok)), tol["gauge"]))
    try:
        oracle = hs.oracle_agreement(e, S_ok)
    except ConfigError:
        raise
    except SasakiLabError as exc:
        out.append(error_record("derivative", "oracle", f"{type(exc).__name__}: {exc}",
                                tolerance=tol["oracle"], n_points=len(S_ok)))
    else:
        out.extend(_record(ev, "derivative", f"oracle_{f}", vals, tol["oracle"]) for f, vals in oracle.items())
    return out


def _theorem32(report: Report, ev: Evaluation, dec, tol: dict):
    d = ev.data
    try:
        res = qc.theorem32_residual(_subset(d, d.rank_ok), _subset_dec(dec, d.rank_ok), tol["lambda_guard"])
    except PreconditionError as exc:
        reason = f"skipped: precondition not met ({exc})"
        report.records.append(skipped_record("theorem32", "w_of_V_log_lambda", reason, tol["theorem"], ev.P))
        report.diagnostics.append(skipped_record("theorem32", "w_plus_dlog_lambda", reason, tol["theorem"], ev.P))
        return
    keep = np.flatnonzero(d.rank_ok)

    def full(r: qc.PointResidual):
        vals = np.zeros(len(d.rank_ok))
        mask = np.zeros(len(d.rank_ok), bool)
        vals[keep], mask[keep] = r.values, r.evaluated
        return vals, mask

    v, mk = full(res.primary)
    report.records.append(_record(ev, "theorem32", "w_of_V_log_lambda", v, tol["theorem"], mk, res.primary.reason))
    v, mk = full(res.diagnostic)
    report.diagnostics.append(_record(ev, "theorem32", "w_plus_dlog_lambda", v, tol["theorem"], mk,
                                      res.diagnostic.reason))


def _subset(d: hs.HypersurfaceData, mask) -> hs.HypersurfaceData:
    """Row subset of the per-point fields."""
    idx = np.flatnonzero(mask)

    def take(x):
        if isinstance(x, nk.Jet):
            return nk.Jet(x.val[idx], x.grad[:, idx], None if x.hess is None else x.hess[:, :, idx])
        if isinstance(x, np.ndarray) and x.ndim and x.shape[0] == len(mask):
            return x[idx]
        return x

    return dataclasses.replace(d, **{f.name: take(getattr(d, f.name)) for f in dataclasses.fields(d)})


def _subset_dec(dec: qc.QUDecomposition, mask) -> qc.QUDecomposition:
    idx = np.flatnonzero(mask)
    return qc.QUDecomposition(*(np.asarray(getattr(dec, f))[idx] for f in
                                ("alpha", "beta", "q", "Q", "fit_residual", "classification")))


# -- classification listing ---------------------------------------------------

def classify_samples(m: Manifest) -> list[dict]:
    """Per-sample quasi-umbilical fit of the manifest's hypersurface."""
    e = build_embedding(m)
    ev = Evaluation(e, m.sample_points())
    rows = []
    if ev.data is None:
        return rows
    d = ev.data
    dec = qc.fit_hypersurface(d, m.tolerance("fit"))
    for k, i in enumerate(ev.idx):
        if not d.rank_ok[k]:
            continue
        rows.append({
            "point": [float(f"{x:.6g}") for x in ev.S[i]],
            "classification": str(dec.classification[k]),
            "alpha": float(dec.alpha[k]),
            "beta": float(dec.beta[k]),
            "q": [float(x) for x in dec.q[k]],
            "fit_residual": float(dec.fit_residual[k]),
            "lambda": float(d.lam.val[k]),
        })
    return rows
