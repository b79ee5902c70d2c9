"""Exact t-SNE, silhouette scoring and per-class Gaussian ellipses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ClassTooSmall, NonFiniteInput, SingleCluster, TooFewSamples
from .labels import GestureClass
from .seeding import rng_for

P_FLOOR = 1e-12
ENTROPY_TOL = 1e-5
MAX_BISECTION_STEPS = 50
COV_RIDGE = 1e-6
ELLIPSE_SIGMAS = 2.0


@dataclass(frozen=True)
class TSNEParams:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    init_std: float = 1e-4
    min_gain: float = 0.01


@dataclass
class Embedding2D:
    points: np.ndarray  # (N, 2)
    ids: list[str] = field(default_factory=list)
    labels: Optional[np.ndarray] = None
    kl_divergence: float = float("nan")
    kl_initial: float = float("nan")
    iterations: int = 0
    seed: int = 0
    params: TSNEParams = field(default_factory=TSNEParams)

    def __len__(self):
        return len(self.points)

    def to_csv(self) -> str:
        lines = ["id,x,y,label"]
        labels = self.labels if self.labels is not None else [None] * len(self.points)
        for i, (x, y), lab in zip(self.ids, self.points, labels):
            lab_s = "" if lab is None else GestureClass(int(lab)).slug
            lines.append(f"{i},{float(x)!r},{float(y)!r},{lab_s}")
        return "\n".join(lines) + "\n"


def standardize(X: np.ndarray) -> np.ndarray:
    """Z-score every column and drop the zero-variance ones."""
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    keep = std > 0
    return (X[:, keep] - X[:, keep].mean(axis=0)) / std[keep]


def squared_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _row_probs(D, beta):
    # D: (N, N) with +inf on the diagonal so self-affinity is exactly zero
    shifted = D - np.min(D, axis=1, keepdims=True)
    P = np.exp(-shifted * beta[:, None])
    P /= P.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        logP = np.where(P > 0, np.log2(P), 0.0)
    H = -(P * logP).sum(axis=1)
    return P, H


def conditional_affinities(X: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic p(j|i) with each row's entropy matched to log2(perplexity).

    Bisection runs on log(beta) for all rows at once; rows stop moving once
    their entropy is within ``ENTROPY_TOL`` bits of the target.
    Returns (P, beta).
    """
    N = len(X)
    D = squared_distances(np.asarray(X, dtype=float))
    np.fill_diagonal(D, np.inf)
    target = np.log2(perplexity)
    lo = np.full(N, -50.0)
    hi = np.full(N, 50.0)
    log_beta = np.zeros(N)
    done = np.zeros(N, dtype=bool)
    for _ in range(MAX_BISECTION_STEPS):
        P, H = _row_probs(D, np.exp(log_beta))
        done |= np.abs(H - target) < ENTROPY_TOL
        if done.all():
            break
        # entropy falls as beta grows
        too_flat = (H > target) & ~done
        too_sharp = (H < target) & ~done
        lo = np.where(too_flat, log_beta, lo)
        hi = np.where(too_sharp, log_beta, hi)
        log_beta = np.where(done, log_beta, (lo + hi) / 2.0)
    P, _ = _row_probs(D, np.exp(log_beta))
    return P, np.exp(log_beta)


def joint_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    P, _ = conditional_affinities(X, perplexity)
    N = len(P)
    P = (P + P.T) / (2.0 * N)
    P = np.maximum(P, P_FLOOR)
    np.fill_diagonal(P, 0.0)
    return P / P.sum()


def _student_q(Y):
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    Q, _ = _student_q(Y)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], np.finfo(float).tiny))))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """dKL/dY = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)."""
    Q, num = _student_q(Y)
    W = (P - Q) * num
    return 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)


def tsne_embed(
    features: np.ndarray,
    perplexity: float = 30.0,
    seed: int = 0,
    iterations: int = 1000,
    ids=None,
    labels=None,
    params: Optional[TSNEParams] = None,
    standardize_input: bool = True,
) -> Embedding2D:
    """Embed the rows of ``features`` in 2-D with exact t-SNE.

    Columns are z-scored first (zero-variance columns dropped). Optimization is
    plain gradient descent with momentum and per-coordinate adaptive gains,
    with early exaggeration for the first ``exaggeration_iters`` steps.
    """
    params = params or TSNEParams(perplexity=perplexity, iterations=iterations)
    # fixed memory layout: reductions over a strided view can round differently
    X = np.ascontiguousarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("t-SNE input contains NaN or inf")
    N = len(X)
    if N < 3 * params.perplexity + 1:
        raise TooFewSamples(
            f"t-SNE with perplexity {params.perplexity} needs >= {3 * params.perplexity + 1:g} "
            f"samples, got {N}"
        )
    if standardize_input:
        X = standardize(X)
    P = joint_probabilities(X, params.perplexity)

    rng = rng_for(seed, 0x75E)
    Y = rng.normal(0.0, params.init_std, size=(N, 2))
    kl0 = kl_divergence(P, Y)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(params.iterations):
        exaggerate = it < params.exaggeration_iters
        grad = kl_gradient(P * params.early_exaggeration if exaggerate else P, Y)
        momentum = params.momentum if exaggerate else params.final_momentum
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, params.min_gain, out=gains)
        update = momentum * update - params.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    if not np.all(np.isfinite(Y)):
        raise NonFiniteInput("t-SNE diverged to non-finite coordinates")
    return Embedding2D(
        points=Y,
        ids=[str(i) for i in ids] if ids is not None else [str(i) for i in range(N)],
        labels=None if labels is None else np.asarray(labels),
        kl_divergence=kl_divergence(P, Y),
        kl_initial=kl0,
        iterations=params.iterations,
        seed=seed,
        params=params,
    )


def silhouette_score(points, labels) -> float:
    """Mean silhouette with Euclidean distance.

    Singleton clusters contribute 0, as do samples with a == b == 0.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least two distinct labels")
    if len(X) < 3:
        raise TooFewSamples("silhouette needs at least three samples")
    D = np.sqrt(squared_distances(X))
    member = labels[None, :] == uniq[:, None]  # (k, N)
    sizes = member.sum(axis=1)
    sums = D @ member.T.astype(float)  # (N, k) total distance to each cluster
    own = np.searchsorted(uniq, labels)
    own_size = sizes[own]
    a = np.divide(sums[np.arange(len(X)), own], own_size - 1,
                  out=np.zeros(len(X)), where=own_size > 1)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(len(X)), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(len(X)), where=denom > 0)
    s[own_size == 1] = 0.0
    return float(s.mean())


@dataclass(frozen=True)
class ClassGaussian:
    label: GestureClass
    mean: np.ndarray
    covariance: np.ndarray
    semi_axes: tuple[float, float]  # (major, minor) at 2 sigma
    angle_deg: float  # major axis direction, counter-clockwise from +x
    count: int = 0

    @property
    def center(self) -> tuple[float, float]:
        return float(self.mean[0]), float(self.mean[1])

    def to_dict(self) -> dict:
        return {
            "label": self.label.slug,
            "count": self.count,
            "mean": [float(v) for v in self.mean],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "ellipse": {
                "center": list(self.center),
                "semi_axes": [float(v) for v in self.semi_axes],
                "angle_deg": float(self.angle_deg),
                "sigmas": ELLIPSE_SIGMAS,
            },
        }


def ellipse_from_covariance(cov: np.ndarray, sigmas: float = ELLIPSE_SIGMAS):
    evals, evecs = np.linalg.eigh(cov)
    major = evecs[:, 1]
    angle = float(np.degrees(np.arctan2(major[1], major[0])))
    # an axis direction is only defined up to sign; fold into (-90, 90]
    if angle <= -90.0:
        angle += 180.0
    elif angle > 90.0:
        angle -= 180.0
    return (sigmas * float(np.sqrt(evals[1])), sigmas * float(np.sqrt(evals[0]))), angle


def fit_class_gaussians(embedding) -> list[ClassGaussian]:
    """Maximum-likelihood Gaussian per labelled class, with a small diagonal ridge."""
    points = np.asarray(getattr(embedding, "points", embedding), dtype=float)
    labels = np.asarray(embedding.labels)
    out = []
    for code in np.unique(labels):
        pts = points[labels == code]
        if len(pts) < 2:
            raise ClassTooSmall(f"class {GestureClass(int(code)).slug} has {len(pts)} point(s)")
        mean = pts.mean(axis=0)
        cov = np.cov(pts, rowvar=False, ddof=1) + COV_RIDGE * np.eye(2)
        axes, angle = ellipse_from_covariance(cov)
        out.append(ClassGaussian(GestureClass(int(code)), mean, cov, axes, angle, len(pts)))
    return out
