"""Spectral gaps, mixing-time bounds and policy entropies.

Also runs the static entropy/spectral-gap study: for a family of
interpolated tabular policies on fixed gridworld kernels, record how the
average policy entropy and the spectral gap of the induced chain move
together.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .mdp import TransitionKernel, induced_chain, mixture_policy, validate_policy

DEFAULT_EPSILON = 0.25


class SpectralError(ArithmeticError):
    """Raised when the eigensolver fails on an induced chain."""


@dataclass(frozen=True)
class SpectrumResult:
    moduli: np.ndarray
    subdominant_modulus: float
    gap: float


def spectrum(chain, atol: float = 1e-10) -> SpectrumResult:
    """Eigenvalue moduli of a row-stochastic matrix and its absolute spectral gap.

    The largest modulus is taken as the Perron root and dropped; the next
    one, clamped to ``[0, 1]``, is the subdominant modulus. Repeated unit
    roots (reducible or periodic chains) therefore give a gap of 0.
    """
    chain = np.asarray(chain, dtype=float)
    if chain.ndim != 2 or chain.shape[0] != chain.shape[1]:
        raise ValueError(f"chain must be square, got shape {chain.shape}")
    row_err = np.abs(chain.sum(axis=1) - 1.0).max()
    if np.any(chain < -atol) or row_err > atol:
        raise ValueError(f"chain is not row-stochastic (max row-sum error {row_err:.3e})")
    try:
        eig = np.linalg.eigvals(chain)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(
            f"eigensolver failed on {chain.shape[0]}x{chain.shape[0]} chain "
            f"(row-sum error {row_err:.3e}, min entry {chain.min():.3e}): {exc}"
        ) from exc
    moduli = np.sort(np.abs(eig))[::-1]
    sub = float(np.clip(moduli[1], 0.0, 1.0)) if moduli.size > 1 else 0.0
    return SpectrumResult(moduli, sub, 1.0 - sub)


def mixing_time_lower_bound(subdominant_modulus: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """``(1/(1-|lambda|) - 1) * ln(1/(2 eps))``; ``inf`` when ``|lambda| == 1``."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    lam = float(subdominant_modulus)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"modulus must lie in [0, 1], got {lam}")
    if lam == 1.0:
        return math.inf
    # lam / (1 - lam) == 1/(1 - lam) - 1 without cancellation for small lam;
    # log1p keeps ln(1/(2 eps)) accurate as eps -> 1/2
    log_term = -math.log(2.0 * epsilon) if epsilon < 0.25 else -math.log1p(2.0 * epsilon - 1.0)
    return lam / (1.0 - lam) * log_term


def row_entropies(policy) -> np.ndarray:
    p = np.asarray(policy, dtype=float)
    logs = np.log(np.where(p > 0, p, 1.0))
    return -(p * logs).sum(axis=-1)


def discrete_policy_entropy(policy) -> float:
    """State-averaged Shannon entropy in nats, with ``0 ln 0 = 0``."""
    policy = validate_policy(policy, atol=1e-9)
    return float(row_entropies(policy).mean())


def gaussian_policy_entropy(covariances: Sequence) -> float:
    """State-averaged differential entropy of Gaussian action distributions."""
    if len(covariances) == 0:
        raise ValueError("need at least one covariance matrix")
    total = 0.0
    for cov in covariances:
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        n = cov.shape[0]
        if cov.shape != (n, n) or not np.allclose(cov, cov.T):
            raise ValueError("covariance must be a symmetric square matrix")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        total += 0.5 * (n * math.log(2.0 * math.pi * math.e) + logdet)
    return total / len(covariances)


@dataclass(frozen=True)
class CorrelationRecord:
    kernel_name: str
    beta: float
    entropy: float
    gap: float
    mixing_lower_bound: float


def _study_point(args) -> CorrelationRecord:
    name, kernel, beta = args
    policy = mixture_policy(beta, kernel.n_states)
    result = spectrum(induced_chain(kernel, policy))
    return CorrelationRecord(
        kernel_name=name,
        beta=float(beta),
        entropy=discrete_policy_entropy(policy),
        gap=result.gap,
        mixing_lower_bound=mixing_time_lower_bound(result.subdominant_modulus, DEFAULT_EPSILON),
    )


def correlation_study(
    kernels: Mapping[str, TransitionKernel] | Iterable[tuple[str, TransitionKernel]],
    n_policies: int = 100,
    workers: int | None = None,
) -> list[CorrelationRecord]:
    if n_policies < 2:
        raise ValueError("n_policies must be at least 2")
    items = list(kernels.items()) if isinstance(kernels, Mapping) else list(kernels)
    betas = np.linspace(0.0, 1.0, n_policies)
    jobs = [(name, kernel, float(beta)) for name, kernel in items for beta in betas]
    workers = workers if workers is not None else int(os.environ.get("ADANAV_WORKERS", 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves submission order, i.e. (kernel, beta)
            return list(pool.map(_study_point, jobs, chunksize=4))
    return [_study_point(job) for job in jobs]


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)
