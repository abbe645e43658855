import numpy as np
import pytest

ACCEPTANCE_LINES = []


def gls_combine(estimates, covs, selections, n_params):
    """Best linear unbiased combination of independent partial estimates.

    ``selections[k]`` lists which parameters ``estimates[k]`` measures. This
    is the brute-force oracle: stack everything, weight by the inverse
    block-diagonal covariance.
    """
    rows, ys, blocks = [], [], []
    for est, cov, sel in zip(estimates, covs, selections):
        P = np.zeros((len(sel), n_params))
        P[np.arange(len(sel)), sel] = 1.0
        rows.append(P)
        ys.append(np.asarray(est))
        blocks.append(np.asarray(cov))
    X = np.vstack(rows)
    y = np.concatenate(ys)
    V = np.zeros((len(y), len(y)))
    at = 0
    for b in blocks:
        m = b.shape[0]
        V[at : at + m, at : at + m] = b
        at += m
    Vi = np.linalg.inv(V)
    info = X.T @ Vi @ X
    cov = np.linalg.inv(info)
    return cov @ X.T @ Vi @ y, cov


def random_spd(rng, q, scale=1.0):
    a = rng.normal(size=(q, q))
    return scale * (a @ a.T + q * 0.2 * np.eye(q))


def masked_data(rng, sizes, sigma, mean=None):
    """Rows drawn from N(mean, sigma) with the given ``{mask: count}`` layout."""
    q = sigma.shape[0]
    mean = np.zeros(q) if mean is None else mean
    chol = np.linalg.cholesky(sigma)
    out = []
    for mask, count in sizes.items():
        x = mean + rng.normal(size=(count, q)) @ chol.T
        x[:, ~np.array(mask, dtype=bool)] = np.nan
        out.append(x)
    return np.vstack(out)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(tag, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
