"""Feature ranking: correlation-based subset selection and PCA loadings."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from respsound.dataset import FeatureDataset
from respsound.errors import DataError

N_BINS = 10
STALE_LIMIT = 5


@dataclass
class SelectionResult:
    method: str
    selected: list[str]
    scores: dict[str, float] = field(default_factory=dict)
    merit: float | None = None

    def report(self) -> str:
        lines = [f"method: {self.method}", f"selected: {', '.join(self.selected)}"]
        if self.merit is not None:
            lines.append(f"subset merit: {self.merit:.3f}")
        lines.append("scores:")
        width = max((len(n) for n in self.scores), default=0)
        for name, score in self.scores.items():
            lines.append(f"  {name:<{width}}  {score:.3f}")
        return "\n".join(lines)


# ---------------------------------------------------------------- CFS

def equal_frequency_bins(x: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Discretize into ``n_bins`` equal-frequency bins.

    Cut points are order statistics of ``x`` itself, so the result depends
    only on the ordering of the values.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.sort(x)
    n = len(s)
    cuts = np.unique(s[[int(np.ceil(i * n / n_bins)) for i in range(1, n_bins)]])
    return np.searchsorted(cuts, x, side="right")


def _entropy(codes: np.ndarray) -> float:
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def symmetric_uncertainty(a: np.ndarray, b: np.ndarray) -> float:
    """2 * I(A;B) / (H(A) + H(B)) for two discrete code arrays."""
    ha, hb = _entropy(a), _entropy(b)
    if ha + hb == 0:
        return 0.0
    joint = np.asarray(a, dtype=np.int64) * (int(np.max(b)) + 1) + np.asarray(b, dtype=np.int64)
    info = ha + hb - _entropy(joint)
    return max(0.0, 2.0 * info / (ha + hb))


def cfs_merit(subset, class_corr: np.ndarray, feat_corr: np.ndarray) -> float:
    k = len(subset)
    if k == 0:
        return 0.0
    idx = list(subset)
    rcf = class_corr[idx].mean()
    if k == 1:
        rff = 0.0
    else:
        block = feat_corr[np.ix_(idx, idx)]
        rff = (block.sum() - np.trace(block)) / (k * (k - 1))
    denom = np.sqrt(k + k * (k - 1) * rff)
    return float(k * rcf / denom) if denom > 0 else 0.0


def _correlations(data: FeatureDataset, n_bins: int):
    codes = [equal_frequency_bins(data.matrix[:, j], n_bins) for j in range(data.n_features)]
    y = data.y
    m = data.n_features
    class_corr = np.array([symmetric_uncertainty(c, y) for c in codes])
    feat_corr = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            feat_corr[i, j] = feat_corr[j, i] = symmetric_uncertainty(codes[i], codes[j])
    return class_corr, feat_corr


def cfs_select(data: FeatureDataset, n_bins: int = N_BINS, stale_limit: int = STALE_LIMIT) -> SelectionResult:
    """Best-first forward search maximizing the CFS merit.

    Correlations are symmetric uncertainties over equal-frequency bins. The
    search stops after ``stale_limit`` consecutive expansions that fail to
    improve the best merit. Selected features are listed in the order they
    joined the best subset; ties go to the earlier feature.
    """
    if len(data.classes_present()) < 2:
        raise DataError("CFS needs at least 2 classes")
    if len(data) < max(10, n_bins):
        raise DataError(f"CFS needs at least {max(10, n_bins)} instances, got {len(data)}")
    class_corr, feat_corr = _correlations(data, n_bins)
    m = data.n_features

    # heap entries: (-merit, insertion counter, subset in addition order)
    counter = 0
    open_list = [(-0.0, counter, ())]
    visited = {frozenset()}
    best, best_merit = (), 0.0
    stale = 0
    while open_list and stale < stale_limit:
        _, _, current = heapq.heappop(open_list)
        improved = False
        for j in range(m):
            if j in current:
                continue
            child = current + (j,)
            key = frozenset(child)
            if key in visited:
                continue
            visited.add(key)
            merit = cfs_merit(child, class_corr, feat_corr)
            counter += 1
            heapq.heappush(open_list, (-merit, counter, child))
            if merit > best_merit + 1e-12:
                best, best_merit = child, merit
                improved = True
        stale = 0 if improved else stale + 1

    names = data.feature_names
    return SelectionResult(
        method="CFS",
        selected=[names[j] for j in best],
        scores={names[j]: float(class_corr[j]) for j in range(m)},
        merit=best_merit,
    )


# ---------------------------------------------------------------- PCA

def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decompose a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted by descending eigenvalue,
    eigenvectors in columns. Iterates until every off-diagonal entry is below
    ``tol`` (relative to the matrix norm when that exceeds 1).
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("jacobi_eigh expects a symmetric square matrix")
    v = np.eye(n)
    threshold = tol * max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a)))
        if off.max(initial=0.0) < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def standardized_covariance(matrix: np.ndarray) -> np.ndarray:
    x = np.asarray(matrix, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    z = np.where(std > 0, (x - mean) / np.where(std > 0, std, 1.0), 0.0)
    return (z.T @ z) / x.shape[0]


def pca_rank(data: FeatureDataset, coverage: float = 0.95) -> SelectionResult:
    """Rank features by eigenvalue-weighted absolute loadings.

    Loadings come from the leading components of the standardized covariance
    that together cover ``coverage`` of the total variance.
    """
    if len(data) < 2:
        raise DataError("PCA needs at least 2 instances")
    if not np.any(data.matrix.std(axis=0) > 0):
        raise DataError("PCA needs at least one non-constant feature")
    cov = standardized_covariance(data.matrix)
    values, vectors = jacobi_eigh(cov)
    values = np.clip(values, 0.0, None)
    cumulative = np.cumsum(values) / values.sum()
    n_keep = int(np.searchsorted(cumulative, coverage - 1e-12) + 1)
    scores = (values[:n_keep][None, :] * np.abs(vectors[:, :n_keep])).sum(axis=1)
    order = np.argsort(-scores, kind="stable")
    names = data.feature_names
    return SelectionResult(
        method="PCA",
        selected=[names[j] for j in order],
        scores={names[j]: float(scores[j]) for j in order},
    )
