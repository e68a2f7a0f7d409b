"""Monte Carlo estimators used as ground truth for the closed forms.

Every estimator is reproducible from ``(inputs, n, seed)``. Large runs are
split into fixed-size chunks whose generators are seeded by
``(seed, chunk_index)``, so memory stays bounded and results do not depend on
how the work is scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .errors import DegenerateInputError, NotSPDError, OracleRefusal
from .linalg import cholesky_spd
from .mggd import MggdParams, log_pdf, sample, score, scatter_to_covariance
from .infotheory import gaussian_entropy
from .kurtosis import sample_mardia_kurtosis

CHUNK = 1 << 18
FIM_MARGIN = 0.05

Draw = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int

    def z_score(self, reference: float) -> float:
        return (reference - self.value) / self.std_error

    def agrees_with(self, reference: float, n_se: float = 3.0) -> bool:
        return abs(reference - self.value) <= n_se * self.std_error

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_samples": self.n_samples, "seed": self.seed}


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _chunks(n: int, size: int = CHUNK):
    start = 0
    index = 0
    while start < n:
        k = min(size, n - start)
        yield index, k
        start += k
        index += 1


def _mean_and_se(values_sum: float, sq_sum: float, n: int) -> tuple[float, float]:
    mean = values_sum / n
    var = max(sq_sum / n - mean * mean, 0.0) * n / (n - 1)
    return mean, float(np.sqrt(var / n))


def mc_entropy(params: MggdParams, n: int = 10**6, seed: int = 0) -> OracleEstimate:
    """Resubstitution estimate ``-mean(log f(U_k))``.

    The standard error is the jackknife one, which for a sample mean is
    ``std / sqrt(n)``.
    """
    if n < 10**4:
        raise ValueError("entropy oracle needs n >= 1e4")
    total = 0.0
    total_sq = 0.0
    for index, k in _chunks(n):
        nll = -log_pdf(params, sample(params, k, chunk_rng(seed, index)))
        total += float(nll.sum())
        total_sq += float(nll @ nll)
    mean, se = _mean_and_se(total, total_sq, n)
    return OracleEstimate(mean, se, n, seed)


def mc_fim_trace(params: MggdParams, n: int = 10**6, seed: int = 0) -> OracleEstimate:
    """Monte Carlo ``E ||grad log f(U)||^2`` using the analytic score.

    Raises
    ------
    OracleRefusal
        Within ``FIM_MARGIN`` of the finiteness boundary, where the estimator's
        variance is unbounded.
    """
    if params.shape <= 0.5 - params.dim / 4.0 + FIM_MARGIN:
        raise OracleRefusal(f"shape {params.shape} too close to the Fisher-information boundary for M={params.dim}")
    total = 0.0
    total_sq = 0.0
    for index, k in _chunks(n):
        g = score(params, sample(params, k, chunk_rng(seed, index)))
        sq = np.einsum("ij,ij->i", g, g)
        total += float(sq.sum())
        total_sq += float(sq @ sq)
    mean, se = _mean_and_se(total, total_sq, n)
    return OracleEstimate(mean, se, n, seed)


class _MardiaAccumulator:
    """Plug-in Mardia kurtosis with an influence-function standard error.

    Three passes over identical data: mean/covariance, fourth-moment terms,
    then the influence values
    ``q^2 - 2 y'W y' - 4 v'y' + b2`` with ``y'`` the centered sample.
    """

    def __init__(self, dim: int):
        self.dim = dim

    def run(self, chunks: Callable[[], "iter"]) -> tuple[float, float, int]:
        m = self.dim
        n = 0
        s1 = np.zeros(m)
        s2 = np.zeros((m, m))
        for x in chunks():
            n += x.shape[0]
            s1 += x.sum(axis=0)
            s2 += x.T @ x
        mu = s1 / n
        cov = s2 / n - np.outer(mu, mu)
        cov = 0.5 * (cov + cov.T)
        try:
            chol = cholesky_spd(cov, "sample covariance")
        except NotSPDError as exc:
            raise DegenerateInputError("sample covariance is singular") from exc
        prec = cho_solve((chol, True), np.eye(m))

        q2 = 0.0
        qyy = np.zeros((m, m))
        qy = np.zeros(m)
        for x in chunks():
            y = x - mu
            q = np.einsum("ij,ij->i", y @ prec, y)
            q2 += float(q @ q)
            qyy += (y * q[:, None]).T @ y
            qy += q @ y
        b2 = q2 / n
        w = prec @ (qyy / n) @ prec
        v = prec @ (qy / n)

        f1 = 0.0
        f2 = 0.0
        for x in chunks():
            y = x - mu
            q = np.einsum("ij,ij->i", y @ prec, y)
            infl = q * q - 2.0 * np.einsum("ij,ij->i", y @ w, y) - 4.0 * (y @ v) + b2
            f1 += float(infl.sum())
            f2 += float(infl @ infl)
        var = max(f2 / n - (f1 / n) ** 2, 0.0)
        return b2 - m * (m + 2), float(np.sqrt(var / n)), n


def mc_mardia_kurtosis(samples, se: str = "influence", n_boot: int = 200, seed: int = 0) -> OracleEstimate:
    """Plug-in Mardia excess kurtosis of an ``(n, M)`` sample.

    ``se="influence"`` uses the first-order (delta-method) standard error;
    ``se="bootstrap"`` resamples rows ``n_boot`` times instead.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if n <= 10 * m * m:
        raise ValueError(f"need more than 10*M^2 = {10 * m * m} samples, got {n}")
    value, infl_se, _ = _MardiaAccumulator(m).run(lambda: iter((x,)))
    if se == "influence":
        return OracleEstimate(value, infl_se, n, seed)
    if se != "bootstrap":
        raise ValueError(f"unknown standard-error method {se!r}")
    rng = np.random.default_rng(seed)
    boots = np.array([sample_mardia_kurtosis(x[rng.integers(0, n, n)]) for _ in range(n_boot)])
    return OracleEstimate(value, float(boots.std(ddof=1)), n, seed)


def mc_mardia_kurtosis_stream(draw: Draw, n: int, seed: int = 0, chunk: int = CHUNK) -> OracleEstimate:
    """Same estimator as :func:`mc_mardia_kurtosis` over ``n`` draws generated on the fly.

    ``draw(rng, k)`` must return a ``(k, M)`` array; it is called with the
    same generators on every pass.
    """

    def chunks():
        for index, k in _chunks(n, chunk):
            yield np.asarray(draw(chunk_rng(seed, index), k), dtype=float)

    first = np.asarray(draw(chunk_rng(seed, 0), 1))
    value, se, count = _MardiaAccumulator(first.shape[1]).run(chunks)
    return OracleEstimate(value, se, count, seed)


def mc_mggd_kurtosis(params: MggdParams, n: int = 10**7, seed: int = 0) -> OracleEstimate:
    return mc_mardia_kurtosis_stream(lambda rng, k: sample(params, k, rng), n, seed)


def mc_fourth_moment_ratio(samples) -> OracleEstimate:
    """``E[V_i^4] / E[V_i^2 V_j^2] - 3`` pooled over coordinates (needs ``M >= 2``).

    Meant for samples whose covariance is a multiple of the identity.
    """
    x = np.asarray(samples, dtype=float)
    n, m = x.shape
    if m < 2:
        raise ValueError("need at least two coordinates")
    sq = x * x
    a = np.mean(sq * sq, axis=1)
    total = sq.sum(axis=1)
    b = (total * total - np.sum(sq * sq, axis=1)) / (m * (m - 1))
    ratio = a.mean() / b.mean()
    infl = (a - ratio * b) / b.mean()
    return OracleEstimate(float(ratio - 3.0), float(infl.std(ddof=1) / np.sqrt(n)), n, 0)


def mc_noisy_entropy(
    u_params: MggdParams,
    scale: float,
    noise_var: float,
    n: int = 10**5,
    seed: int = 0,
    n_inner: int = 1000,
    batch: int = 250,
) -> OracleEstimate:
    """Nested Monte Carlo estimate of ``h(scale * U + N)``, ``N ~ N(0, noise_var I)``.

    The density of the sum at each outer draw is an inner average of either
    the Gaussian kernel over fresh draws of ``scale * U`` or the MGGD density
    over fresh noise draws, whichever component is narrower being integrated
    out. The log of the inner mean gets the usual second-order bias
    correction; the standard error comes from batch means over outer batches
    (each batch has its own inner sample).
    """
    if n < 10 * batch:
        raise ValueError("need at least ten outer batches")
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    m = u_params.dim
    scale = abs(float(scale))
    signal_var = scale**2 * float(np.trace(scatter_to_covariance(u_params))) / m
    over_noise = signal_var > noise_var
    x_params = u_params.scaled(scale) if scale > 0 else None
    sd = np.sqrt(noise_var)
    log_norm = -0.5 * m * np.log(2.0 * np.pi * noise_var)

    batch_means = []
    for index, k in _chunks(n, batch):
        rng = chunk_rng(seed, index)
        outer = sd * rng.standard_normal((k, m))
        if x_params is not None:
            outer += sample(x_params, k, rng)
        if over_noise:
            inner = sd * rng.standard_normal((n_inner, m))
            pts = (outer[:, None, :] - inner[None, :, :]).reshape(-1, m)
            logs = log_pdf(x_params, pts).reshape(k, n_inner)
        else:
            inner = sample(x_params, n_inner, rng) if x_params is not None else np.zeros((n_inner, m))
            diff = outer[:, None, :] - inner[None, :, :]
            logs = log_norm - np.einsum("ijk,ijk->ij", diff, diff) / (2.0 * noise_var)
        top = logs.max(axis=1, keepdims=True)
        w = np.exp(logs - top)
        mean = w.mean(axis=1)
        var = w.var(axis=1, ddof=1)
        log_f = np.log(mean) + top[:, 0] + var / (2.0 * n_inner * mean**2)
        batch_means.append(-float(log_f.mean()))
    bm = np.array(batch_means)
    return OracleEstimate(float(bm.mean()), float(bm.std(ddof=1) / np.sqrt(len(bm))), n, seed)


def mc_mutual_information(
    u_params: MggdParams,
    z: float,
    gain: float,
    noise_var: float,
    n: int = 10**5,
    seed: int = 0,
    n_inner: int = 1000,
) -> OracleEstimate:
    """``I(C; g z U + N | z) = h(g z U + N) - h(N)`` by nested Monte Carlo.

    Requires ``n >= 1e5`` and ``n_inner >= 1e3``.
    """
    if n < 10**5 or n_inner < 10**3:
        raise ValueError("mutual-information oracle needs n >= 1e5 and n_inner >= 1e3")
    h = mc_noisy_entropy(u_params, gain * z, noise_var, n=n, seed=seed, n_inner=n_inner)
    return OracleEstimate(h.value - gaussian_entropy(noise_var, u_params.dim), h.std_error, n, seed)
