"""Catalog of explicit Sasakian ambient structures.

Coordinates are ordered ``(x1..xn, y1..yn, z)``.  The standard structure
has contact form ``eta = (dz - sum y_i dx_i) / 2``, Reeb field
``xi = 2 d/dz`` and metric ``eta (x) eta + (sum dx_i^2 + dy_i^2) / 4``.
"""

from __future__ import annotations

import numpy as np

from . import ambient
from .ambient import AmbientStructure
from .errors import ConfigError, ModelError

MODELS = {"sasakian_r3": 1, "sasakian_r5": 2}
SELF_CHECK_POINTS = 32
SELF_CHECK_SEED = 2024
SELF_CHECK_TOL = 1e-8
SAMPLE_BOX = 2.0


def _fields(n: int, orientation: int):
    dim = 2 * n + 1
    iz = 2 * n

    def eta(c):
        out = [0.0] * dim
        for i in range(n):
            out[i] = -0.5 * c[n + i]
        out[iz] = 0.5
        return out

    def xi(c):
        out = [0.0] * dim
        out[iz] = 2.0
        return out

    def metric(c):
        e = eta(c)
        g = [[e[a] * e[b] for b in range(dim)] for a in range(dim)]
        for a in range(2 * n):
            g[a][a] = g[a][a] + 0.25
        return g

    def phi(c):
        # frame: e_i = 2 d/dy_i, e_{n+i} = 2 (d/dx_i + y_i d/dz), xi
        # phi e_i = s e_{n+i}, phi e_{n+i} = -s e_i, phi xi = 0
        s = float(orientation)
        m = [[0.0] * dim for _ in range(dim)]
        for i in range(n):
            m[n + i][i] = -s          # phi d/dx_i = -s d/dy_i
            m[i][n + i] = s           # phi d/dy_i = s (d/dx_i + y_i d/dz)
            m[iz][n + i] = s * c[n + i]
        return m

    return phi, xi, eta, metric


def _build(n: int, orientation: int) -> AmbientStructure:
    phi, xi, eta, metric = _fields(n, orientation)
    name = "sasakian_r3" if n == 1 else "sasakian_r5"
    return AmbientStructure(dim=2 * n + 1, phi=phi, xi=xi, eta=eta, metric=metric, name=name)


def self_check_points(dim: int, count: int = SELF_CHECK_POINTS, seed: int = SELF_CHECK_SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-SAMPLE_BOX, SAMPLE_BOX, size=(count, dim))


def standard_sasakian(n: int) -> AmbientStructure:
    """The standard Sasakian structure on R^(2n+1), n in {1, 2}.

    The sign of phi on the frame is not fixed in advance: both choices
    are tried and the one satisfying the covariant-derivative condition on
    phi is kept.  The result is validated at seeded points before return.
    """
    if n not in (1, 2):
        raise ConfigError(f"standard_sasakian supports n in {{1, 2}}, got {n!r}")
    pts = self_check_points(2 * n + 1)
    chosen = None
    for orientation in (1, -1):
        cand = _build(n, orientation)
        if ambient.sasakian_residuals(cand, pts[:4])["nabla_phi"].max() <= SELF_CHECK_TOL:
            chosen = cand
            break
    if chosen is None:
        raise ModelError("neither phi orientation satisfies the Sasakian condition")
    worst = {k: float(v.max()) for k, v in ambient.contact_metric_residuals(chosen, pts).items()}
    worst.update({k: float(v.max()) for k, v in ambient.sasakian_residuals(chosen, pts).items()})
    bad = {k: v for k, v in worst.items() if not v <= SELF_CHECK_TOL}
    if bad:
        raise ModelError(f"self-validation failed: {bad}")
    return chosen


def model_by_name(name: str) -> AmbientStructure:
    try:
        n = MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; expected one of {sorted(MODELS)}") from None
    return standard_sasakian(n)


def euclidean(dim: int) -> AmbientStructure:
    """Flat chart with zero structure tensors (test-only ambient)."""

    def zero_mat(c):
        return [[0.0] * dim for _ in range(dim)]

    def zero_vec(c):
        return [0.0] * dim

    def ident(c):
        return [[1.0 if a == b else 0.0 for b in range(dim)] for a in range(dim)]

    return AmbientStructure(dim=dim, phi=zero_mat, xi=zero_vec, eta=zero_vec, metric=ident, name=f"euclidean_r{dim}")
