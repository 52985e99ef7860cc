"""Head-to-head distances and 2-D embedding.

Each attention head is compared to every other by the average Jensen-Shannon
divergence between their attention distributions over the same tokens. The
resulting distance matrix is embedded in the plane with metric MDS (SMACOF),
whose stress never increases across iterations; that property is asserted in
tests. Averaging over tokens (rather than summing) keeps distances comparable
across corpora of different sizes; pass raw_sum=True for the plain sum.

JS divergence does not satisfy the triangle inequality (its square root
does), so the "distances" are only approximately metric; SMACOF does not
care.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .interchange import ExtractSet, HeadId

LN2 = float(np.log(2.0))
DIST_TOL = 1e-6
STRESS_TOL = 1e-9
MAX_ITER = 500


def _entropy(rows: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats along the last axis, 0 * ln 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0, rows * np.log(rows), 0.0)
    return -terms.sum(axis=-1)


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """JS(p, q) = KL(p||m)/2 + KL(q||m)/2 with m the midpoint, natural log."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    for name, dist in (("p", p), ("q", q)):
        if (dist < 0).any():
            raise ValueError(f"{name} has negative entries")
        if abs(dist.sum() - 1.0) > DIST_TOL:
            raise ValueError(f"{name} sums to {dist.sum():.8f}, not 1")
    m = 0.5 * (p + q)
    return float(_entropy(m) - 0.5 * _entropy(p) - 0.5 * _entropy(q))


@dataclass
class HeadDistanceMatrix:
    head_ids: list[HeadId]
    d: np.ndarray  # [n, n] symmetric, zero diagonal

    @property
    def n(self) -> int:
        return len(self.head_ids)

    def validate(self) -> None:
        if self.d.shape != (self.n, self.n):
            raise ValidationError(f"distance matrix {self.d.shape} for {self.n} heads")
        if not np.array_equal(self.d, self.d.T):
            raise ValidationError("distance matrix is not symmetric")
        if np.diagonal(self.d).any():
            raise ValidationError("distance matrix has nonzero diagonal")
        if (self.d < 0).any():
            raise ValidationError("distance matrix has negative entries")


def head_distances(extract: ExtractSet, raw_sum: bool = False) -> HeadDistanceMatrix:
    """Average (or total, raw_sum) JS divergence between each pair of heads.

    Uses JS(p, q) = H(m) - (H(p) + H(q)) / 2 so a whole segment's worth of
    pairs vectorizes; the definition-level double loop lives in the oracle.
    """
    if not extract.segments:
        raise ValueError("empty extract")
    head_ids = extract.head_ids()
    n = len(head_ids)
    acc = np.zeros((n, n))
    total_tokens = 0
    for seg in extract.segments:
        t = len(seg.tokens)
        rows = seg.attention.astype(np.float64).reshape(n, t, t)
        h_rows = _entropy(rows)  # [n, t]
        for i in range(n):
            mix = 0.5 * (rows[i][None, :, :] + rows[i:])
            h_mix = _entropy(mix)  # [n - i, t]
            js = (h_mix - 0.5 * (h_rows[i][None, :] + h_rows[i:])).sum(axis=-1)
            acc[i, i:] += js
        total_tokens += t
    acc = np.triu(acc, 1)
    acc = acc + acc.T
    if not raw_sum:
        acc /= total_tokens
    np.clip(acc, 0.0, None, out=acc)
    return HeadDistanceMatrix(head_ids, acc)


@dataclass
class Embedding2D:
    coordinates: np.ndarray  # [n, dims]
    stress: float  # final normalized stress
    stress_history: list[float] = field(default_factory=list)  # raw, per iteration


def _raw_stress(x: np.ndarray, delta: np.ndarray) -> float:
    d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    diff = delta - d
    return float(np.triu(diff * diff, 1).sum())


def _classical_init(delta: np.ndarray, dims: int) -> np.ndarray:
    n = len(delta)
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ (delta * delta) @ j
    b = 0.5 * (b + b.T)
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1][:dims]
    scale = np.sqrt(np.clip(eigvals[order], 0.0, None))
    return eigvecs[:, order] * scale


def mds_embed(dist: HeadDistanceMatrix | np.ndarray, dims: int = 2,
              max_iter: int = MAX_ITER, tol: float = STRESS_TOL) -> Embedding2D:
    """Metric MDS by stress majorization (SMACOF), classical-MDS start.

    Minimizes raw stress sum_{i<j} (delta_ij - |x_i - x_j|)^2 via the Guttman
    transform, stopping when the relative stress change drops below tol.
    Reported stress is raw stress divided by sum_{i<j} delta_ij^2 (zero for an
    all-zero input). Output is defined up to rigid motion; compare pairwise
    distances, not coordinates.
    """
    delta = dist.d if isinstance(dist, HeadDistanceMatrix) else np.asarray(dist, dtype=np.float64)
    n = len(delta)
    if delta.shape != (n, n) or not np.array_equal(delta, delta.T):
        raise ValidationError("mds_embed needs a symmetric square matrix")
    if (delta < 0).any():
        raise ValidationError("mds_embed needs nonnegative distances")
    x = _classical_init(delta, dims)
    history = [_raw_stress(x, delta)]
    for _ in range(max_iter):
        d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, delta / d, 0.0)
        np.fill_diagonal(ratio, 0.0)
        b = -ratio
        np.fill_diagonal(b, ratio.sum(axis=1))
        x = (b @ x) / n
        stress = _raw_stress(x, delta)
        history.append(stress)
        prev = history[-2]
        if prev <= 0 or (prev - stress) / prev < tol:
            break
    denom = float(np.triu(delta * delta, 1).sum())
    normalized = history[-1] / denom if denom > 0 else 0.0
    return Embedding2D(x, normalized, history)
