"""Principal components from the eigendecomposition of the sample covariance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PCAResult:
    scores: np.ndarray
    components: np.ndarray  # K x k, columns are eigenvectors
    explained_variance: np.ndarray  # all K eigenvalues, descending
    explained_ratio: np.ndarray  # fractions of total variance, descending
    mean: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[1]

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components

    def reconstruct(self) -> np.ndarray:
        return self.scores @ self.components.T + self.mean


def elbow_k(ratios) -> int:
    """Number of components kept before the marginal explained variance
    first drops below half of the previous component's."""
    ratios = np.asarray(ratios, dtype=float)
    k = 1
    while k < len(ratios) and ratios[k] > 0 and ratios[k] >= 0.5 * ratios[k - 1]:
        k += 1
    return k


def pca_reduce(X, k: int | str = "elbow") -> PCAResult:
    """Project ``X`` on its leading principal components.

    ``k`` is a fixed count or ``"elbow"``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, K = X.shape
    if n < 2 or K < 1:
        raise ValueError("pca_reduce needs n >= 2 and K >= 1")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False, ddof=1).reshape(K, K)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(K)])
    evecs = evecs * np.where(signs == 0, 1.0, signs)
    total = evals.sum()
    ratio = evals / total if total > 0 else np.zeros(K)
    if k == "elbow":
        k = elbow_k(ratio)
    k = int(k)
    if not 1 <= k <= K:
        raise ValueError(f"k={k} outside [1, {K}]")
    comps = evecs[:, :k]
    return PCAResult(
        scores=(X - mean) @ comps,
        components=comps,
        explained_variance=evals,
        explained_ratio=ratio,
        mean=mean,
    )
