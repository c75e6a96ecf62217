"""Activation clustering and spectral-signature backdoor detectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blastlab.errors import ContractError


def pca_project(X: np.ndarray, dims: int = 3) -> np.ndarray:
    """Centre ``X`` and project onto its top ``dims`` principal directions.

    Missing directions (rank below ``dims``) come back as zero columns.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < dims:
        raise ContractError(f"need at least {dims} rows, got shape {X.shape}")
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    tol = max(Xc.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    keep = min(dims, rank)
    out = np.zeros((X.shape[0], dims))
    if keep:
        v = vt[:keep]
        # fix signs so the projection is reproducible across LAPACK builds
        flip = np.sign(v[np.arange(keep), np.argmax(np.abs(v), axis=1)])
        out[:, :keep] = Xc @ (v * flip[:, None]).T
    return out


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.integers(n) if total <= 0 else int(np.searchsorted(np.cumsum(d2), rng.random() * total))
        i = min(i, n - 1)
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int):
    labels = None
    for _ in range(max_iter):
        d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            members = X[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    inertia = float(((X - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def kmeans(X: np.ndarray, k: int = 2, seed: int = 0, restarts: int = 10, max_iter: int = 300):
    """Best-of-restarts Lloyd iterations from k-means++ seeds. Returns (labels, centroids, inertia)."""
    X = np.asarray(X, dtype=np.float64)
    if k < 1 or X.shape[0] < k:
        raise ContractError(f"need at least k={k} rows, got {X.shape[0]}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        out = _lloyd(X, _kmeanspp(X, k, rng), max_iter)
        if best is None or out[2] < best[2] - 1e-12:
            best = out
    return best


def silhouette(X: np.ndarray, labels: np.ndarray, max_rows: int = 2000, seed: int = 0) -> float | None:
    """Mean silhouette on at most ``max_rows`` rows; None when fewer than two clusters."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        return None
    if len(X) > max_rows:
        idx = np.sort(np.random.default_rng(seed).choice(len(X), max_rows, replace=False))
        X, labels = X[idx], labels[idx]
        if len(np.unique(labels)) < 2:
            return None
    d = np.sqrt(np.maximum(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2), 0.0))
    uniq = np.unique(labels)
    s = np.zeros(len(X))
    for i in range(len(X)):
        own = labels == labels[i]
        n_own = own.sum() - 1
        if n_own == 0:
            continue
        a = d[i, own].sum() / n_own
        b = min(d[i, labels == c].mean() for c in uniq if c != labels[i])
        s[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(s.mean())


def spectral_scores(X: np.ndarray) -> np.ndarray:
    """Squared projection of each centred row on the top right singular vector."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ContractError(f"need at least two rows, got shape {X.shape}")
    Xc = X - X.mean(axis=0)
    if not np.any(Xc):
        return np.zeros(len(X))
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    return (Xc @ vt[0]) ** 2


@dataclass
class DetectionScores:
    precision: float | None
    recall: float | None
    auc: float | None
    flagged: int
    positives: int


def roc_auc(scores: np.ndarray, truth: np.ndarray) -> float | None:
    """Mann-Whitney rank statistic with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    npos = int(truth.sum())
    nneg = len(truth) - npos
    if npos == 0 or nneg == 0:
        return None
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_s = scores[order]
    i = 0
    while i < len(sorted_s):
        j = i
        while j + 1 < len(sorted_s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return float((ranks[truth].sum() - npos * (npos + 1) / 2) / (npos * nneg))


def detection_metrics(flags, truth, scores=None) -> DetectionScores:
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if flags.shape != truth.shape:
        raise ContractError(f"flags {flags.shape} and labels {truth.shape} differ")
    tp = int(np.sum(flags & truth))
    nf = int(flags.sum())
    npos = int(truth.sum())
    precision = tp / nf if nf else None
    recall = tp / npos if npos else None
    auc = roc_auc(scores, truth) if scores is not None else None
    return DetectionScores(precision, recall, auc, nf, npos)


@dataclass
class ClassResult:
    action: int
    size: int
    cluster_sizes: list[int]
    flagged_cluster: int | None
    silhouette: float | None


@dataclass
class DetectionReport:
    method: str
    classes: list[ClassResult]
    flags: np.ndarray
    scores: np.ndarray
    metrics: DetectionScores
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "classes": [vars(c) for c in self.classes],
            "flagged": int(self.flags.sum()),
            "samples": int(len(self.flags)),
            "precision": self.metrics.precision,
            "recall": self.metrics.recall,
            "auc": self.metrics.auc,
            "positives": self.metrics.positives,
            **self.extra,
        }


def activation_clustering(acts: np.ndarray, actions: np.ndarray, truth: np.ndarray, seed: int = 0,
                          dims: int = 3, share: float = 0.35, restarts: int = 10) -> DetectionReport:
    """Per action class: project to ``dims`` components, 2-means, flag the
    smaller cluster when it holds less than ``share`` of the class.

    The score of a row is its distance to the larger cluster's centroid in the
    projected space, used only for the AUC.
    """
    acts = np.asarray(acts, dtype=np.float64)
    actions = np.asarray(actions)
    flags = np.zeros(len(acts), dtype=bool)
    scores = np.zeros(len(acts))
    classes = []
    for a in np.unique(actions):
        idx = np.flatnonzero(actions == a)
        if len(idx) < max(dims, 2):
            classes.append(ClassResult(int(a), len(idx), [len(idx)], None, None))
            continue
        proj = pca_project(acts[idx], dims)
        labels, centers, _ = kmeans(proj, 2, seed=seed, restarts=restarts)
        sizes = [int(np.sum(labels == j)) for j in range(2)]
        small = int(np.argmin(sizes))
        big = 1 - small
        flagged = None
        if 0 < sizes[small] < share * len(idx):
            flags[idx[labels == small]] = True
            flagged = small
        scores[idx] = np.sqrt(((proj - centers[big]) ** 2).sum(axis=1))
        classes.append(ClassResult(int(a), len(idx), sizes, flagged, silhouette(proj, labels, seed=seed)))
    return DetectionReport("activation_clustering", classes, flags, scores,
                           detection_metrics(flags, truth, scores))


def spectral_signature(acts: np.ndarray, actions: np.ndarray, truth: np.ndarray,
                       eps: float = 0.05, factor: float = 1.5) -> DetectionReport:
    """Per action class, flag the top ``factor * eps`` fraction of spectral scores."""
    acts = np.asarray(acts, dtype=np.float64)
    actions = np.asarray(actions)
    flags = np.zeros(len(acts), dtype=bool)
    scores = np.zeros(len(acts))
    classes = []
    for a in np.unique(actions):
        idx = np.flatnonzero(actions == a)
        if len(idx) < 2:
            classes.append(ClassResult(int(a), len(idx), [len(idx)], None, None))
            continue
        s = spectral_scores(acts[idx])
        scores[idx] = s
        m = int(np.floor(factor * eps * len(idx)))
        if m > 0:
            top = np.argsort(-s, kind="mergesort")[:m]
            flags[idx[top]] = True
        classes.append(ClassResult(int(a), len(idx), [len(idx) - m, m], None, None))
    return DetectionReport("spectral_signature", classes, flags, scores,
                           detection_metrics(flags, truth, scores), {"eps": eps, "factor": factor})
