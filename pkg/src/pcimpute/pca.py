"""Principal-component extraction and component-count enumeration.

Components are always extracted from the Pearson correlation matrix of
the input: columns are standardized to mean zero and unit sample
variance first, so scale differences between columns never leak into
the weights.  Weight columns follow a fixed orientation rule (the
largest-magnitude entry is positive, ties resolved by the lowest row
index), which makes the decomposition reproducible bit for bit across
runs on identical input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENUMERATION_METHODS = (
    "kaiser",
    "parallel-analysis",
    "optimal-coordinates",
    "acceleration-factor",
)


def standardize(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center each column and divide by its sample standard deviation.

    Returns ``(standardized, centers, scales)``.  Constant columns get a
    scale of 1.0 and therefore standardize to all zeros.

    Raises
    ------
    ValueError
        If the matrix has fewer than two rows or any non-finite entry.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if matrix.shape[0] < 2:
        raise ValueError("standardize needs at least two rows")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix must be finite")
    centers = matrix.mean(axis=0)
    scales = matrix.std(axis=0, ddof=1)
    scales = np.where(scales == 0.0, 1.0, scales)
    return (matrix - centers) / scales, centers, scales


def max_components(n_rows: int, n_cols: int) -> int:
    """Largest extractable component count for a data shape."""
    if n_rows < 1 or n_cols < 1:
        raise ValueError("shape must be positive")
    return min(int(n_rows), int(n_cols))


@dataclass(eq=False)
class PcaResult:
    """Output of ``pca``: leading components of a correlation matrix.

    Attributes
    ----------
    scores : ndarray, shape (n_rows, q)
        Component scores, the standardized matrix times ``weights``.
    weights : ndarray, shape (n_cols, q)
        Orthonormal weight columns under the fixed orientation rule.
    eigenvalues : ndarray, shape (q,)
        Leading correlation-matrix eigenvalues, nonincreasing.
    centers, scales : ndarray, shape (n_cols,)
        Column statistics used for standardization.
    """

    scores: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    centers: np.ndarray
    scales: np.ndarray


def _oriented_descending_eigh(corr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # eigh returns ascending order; flip, then fix each column's sign.
    eigenvalues, vectors = np.linalg.eigh(corr)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[lead, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    return eigenvalues, vectors * signs


def _correlation(standardized: np.ndarray) -> np.ndarray:
    n = standardized.shape[0]
    return standardized.T @ standardized / (n - 1)


def pca(matrix: np.ndarray, n_components: int) -> PcaResult:
    """Extract the leading principal components of ``matrix``.

    The decomposition is of the Pearson correlation matrix; scores are
    the standardized input projected onto the retained weight columns,
    so each score column's sample variance equals its eigenvalue.

    Parameters
    ----------
    matrix : ndarray, shape (n_rows, n_cols)
        Finite data matrix with at least two rows.
    n_components : int
        Number of components, ``1 <= n_components <= min(n_rows, n_cols)``.
    """
    matrix = np.asarray(matrix, dtype=float)
    standardized, centers, scales = standardize(matrix)
    limit = max_components(*matrix.shape)
    if not 1 <= int(n_components) <= limit:
        raise ValueError(
            f"n_components must be in [1, {limit}], got {n_components}"
        )
    n_components = int(n_components)
    eigenvalues, vectors = _oriented_descending_eigh(_correlation(standardized))
    weights = vectors[:, :n_components]
    return PcaResult(
        scores=standardized @ weights,
        weights=weights,
        eigenvalues=eigenvalues[:n_components].copy(),
        centers=centers,
        scales=scales,
    )


def correlation_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Full correlation-matrix spectrum of ``matrix``, nonincreasing."""
    standardized, _, _ = standardize(matrix)
    eigenvalues, _ = _oriented_descending_eigh(_correlation(standardized))
    return eigenvalues


@dataclass(frozen=True)
class EnumerationRule:
    """Component-count rule selector.

    ``method`` is one of ``ENUMERATION_METHODS``; ``replicates`` and
    ``quantile`` only apply to parallel analysis.
    """

    method: str
    replicates: int = 100
    quantile: float = 0.95

    def __post_init__(self) -> None:
        if self.method not in ENUMERATION_METHODS:
            raise ValueError(f"unknown enumeration method {self.method!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie strictly between 0 and 1")


def kaiser_count(eigenvalues: np.ndarray) -> int:
    """Number of eigenvalues strictly greater than one."""
    return int(np.sum(np.asarray(eigenvalues, dtype=float) > 1.0))


def parallel_analysis_count(
    eigenvalues: np.ndarray,
    n_rows: int,
    n_cols: int,
    rng: np.random.Generator,
    replicates: int = 100,
    quantile: float = 0.95,
) -> int:
    """Leading eigenvalues exceeding same-shape standard-normal baselines.

    Each replicate draws an ``n_rows x n_cols`` standard-normal matrix
    and records its correlation spectrum; the comparison threshold per
    position is the requested quantile across replicates.  Counting
    stops at the first position that fails to exceed its threshold.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if replicates < 1:
        raise ValueError(f"replicates must be positive, got {replicates}")
    reference = np.empty((replicates, n_cols))
    for rep in range(replicates):
        noise = rng.standard_normal((n_rows, n_cols))
        reference[rep] = correlation_eigenvalues(noise)
    thresholds = np.quantile(reference, quantile, axis=0)
    count = 0
    for observed, threshold in zip(eigenvalues, thresholds):
        if observed > threshold:
            count += 1
        else:
            break
    return count


def optimal_coordinates_count(eigenvalues: np.ndarray) -> int:
    """Last position whose eigenvalue exceeds the extrapolated coordinate.

    The coordinate for position ``i`` is the linear extrapolation from
    the two following eigenvalues, ``2 * e[i+1] - e[i+2]``.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size < 3:
        raise ValueError("need at least three eigenvalues")
    retained = 0
    for i in range(eigenvalues.size - 2):
        predicted = 2.0 * eigenvalues[i + 1] - eigenvalues[i + 2]
        if eigenvalues[i] > predicted:
            retained = i + 1
    return retained


def acceleration_factor_count(eigenvalues: np.ndarray) -> int:
    """Index preceding the largest second-order difference of the scree."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size < 3:
        raise ValueError("need at least three eigenvalues")
    second = eigenvalues[:-2] - 2.0 * eigenvalues[1:-1] + eigenvalues[2:]
    return int(np.argmax(second)) + 1


def enumerate_components(
    matrix: np.ndarray,
    rule: EnumerationRule,
    rng: np.random.Generator | None = None,
) -> int:
    """Apply a component-count rule to the correlation spectrum of ``matrix``."""
    matrix = np.asarray(matrix, dtype=float)
    eigenvalues = correlation_eigenvalues(matrix)
    if rule.method == "kaiser":
        return kaiser_count(eigenvalues)
    if rule.method == "parallel-analysis":
        if rng is None:
            raise ValueError("parallel analysis requires a random generator")
        return parallel_analysis_count(
            eigenvalues,
            matrix.shape[0],
            matrix.shape[1],
            rng,
            replicates=rule.replicates,
            quantile=rule.quantile,
        )
    if rule.method == "optimal-coordinates":
        return optimal_coordinates_count(eigenvalues)
    return acceleration_factor_count(eigenvalues)
