import numpy as np
import pytest

from sasakilab import models

PLANE = ["s1", "0", "s2"]

HAND_EMBEDDINGS = {
    "sasakian_r3": [
        ["s1", "0.2*sin(s1+s2)", "s2"],
        ["s1", "s2", "0.3*s1^2 - s2*s1 + sin(s2)"],
        ["s1 + 0.1*s2^2", "cos(s1)*(1+0.3*sin(s2))", "s2"],
        ["s1", "s2", "0.5*cos(s1)*sin(s2) + 0.2*s1"],
        ["s1 + 0.2*sin(s2)", "s2", "0.1*exp(s1)*s2 - 0.3*s1^3"],
    ],
    "sasakian_r5": [
        ["s1", "s2", "s3", "s4", "0.2*sin(s1+s3) + 0.1*s2*s4"],
        ["s1", "0.3*cos(s2)*s4 + 0.1*s1^2", "s2", "s3", "s4"],
        ["s1 + 0.1*sin(s4)", "s2", "s3 - 0.2*s1*s2", "s4", "0.4*sin(s1)*cos(s3) + 0.1*s2^2"],
        ["s1", "s2", "0.25*tanh(s1 - s4) + 0.1*s3", "s3", "s4"],
        ["s1", "s2", "s3", "s4", "0.3*s1*s3 - 0.2*s2^2 + 0.1*sin(s4)"],
    ],
}


def random_embedding(n: int, rng: np.random.Generator) -> list[str]:
    """Graph over 2n of the chart coordinates with a random trig/polynomial
    height; the remaining coordinates may carry a small wobble."""
    dim, m = 2 * n + 1, 2 * n
    k = int(rng.integers(dim))
    params = [f"s{i + 1}" for i in range(m)]

    def coef():
        return f"{rng.uniform(-0.4, 0.4):.3f}"

    terms = []
    for _ in range(3):
        kind = rng.integers(3)
        i, j = rng.integers(m, size=2)
        if kind == 0:
            terms.append(f"{coef()}*sin({rng.uniform(0.5, 1.5):.3f}*{params[i]} + {params[j]})")
        elif kind == 1:
            terms.append(f"{coef()}*{params[i]}*{params[j]}")
        else:
            terms.append(f"{coef()}*cos({params[i]})^2")
    height = " + ".join(terms)
    comps, p = [], 0
    for c in range(dim):
        if c == k:
            comps.append(height)
        else:
            wobble = f" + 0.1*sin({params[(p + 1) % m]})" if rng.uniform() < 0.5 else ""
            comps.append(params[p] + wobble)
            p += 1
    return comps


def embedding_corpus(model: str, n_random: int = 3, seed: int = 1234) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    n = models.MODELS[model]
    plane = PLANE if n == 1 else ["s1", "s2", "0", "s3", "s4"]
    return [plane] + HAND_EMBEDDINGS[model] + [random_embedding(n, rng) for _ in range(n_random)]


@pytest.fixture(scope="session")
def r3():
    return models.standard_sasakian(1)


@pytest.fixture(scope="session")
def r5():
    return models.standard_sasakian(2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
