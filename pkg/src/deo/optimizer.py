"""Contrastive query-embedding objective, its analytic gradient, and the Adam loop.

The optimized embedding is pulled toward positive sub-query embeddings,
pushed away from negative ones, and anchored to the original query embedding:

    L(e) = lp * mean_i ||e - p_i||^2  -  ln * mean_j ||e - n_j||^2  +  lo * ||e - e_o||^2

Empty positive or negative sets simply drop the corresponding term.
Optimization runs in ambient space; unit normalization, when enabled, is
applied to the inputs once before the loop and never between steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NotStronglyConvexError
from .vecmath import as_vector, l2_normalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizationConfig:
    """Loss weights and Adam settings.

    Defaults are the text-retrieval preset: lambda_p = lambda_n = 1,
    lambda_o = 0.2, 20 steps. The multimodal preset raises lambda_o to 1.0.
    """

    lambda_p: float = 1.0
    lambda_n: float = 1.0
    lambda_o: float = 0.2
    steps: int = 20
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    normalize_inputs: bool = True

    def __post_init__(self) -> None:
        if self.lambda_p < 0 or self.lambda_n < 0 or self.lambda_o < 0:
            raise ValueError("lambda weights must be non-negative")
        # steps = 0 is allowed so sweeps can include the no-optimization
        # endpoint, which is the plain-search baseline by construction.
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


def text_preset() -> OptimizationConfig:
    return OptimizationConfig(lambda_p=1.0, lambda_n=1.0, lambda_o=0.2)


def multimodal_preset() -> OptimizationConfig:
    return OptimizationConfig(lambda_p=1.0, lambda_n=1.0, lambda_o=1.0)


def _as_matrix(vectors, dim: int, label: str) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros((0, dim))
    rows = [as_vector(v) for v in vectors]
    for r in rows:
        if r.shape[0] != dim:
            raise DimensionMismatchError(
                f"{label} vector has dimension {r.shape[0]}, expected {dim}"
            )
    return np.stack(rows)


@dataclass(frozen=True)
class DecompositionEmbeddings:
    """Embedded decomposition of one query.

    original  -- (d,) embedding of the raw query
    positives -- (K, d) embeddings of positive sub-queries, K >= 0
    negatives -- (M, d) embeddings of negative sub-queries, M >= 0
    """

    original: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    @classmethod
    def from_vectors(cls, original, positives=(), negatives=()) -> "DecompositionEmbeddings":
        e_o = as_vector(original)
        d = e_o.shape[0]
        return cls(
            original=e_o,
            positives=_as_matrix(list(positives), d, "positive"),
            negatives=_as_matrix(list(negatives), d, "negative"),
        )

    @property
    def dim(self) -> int:
        return self.original.shape[0]

    @property
    def num_positives(self) -> int:
        return self.positives.shape[0]

    @property
    def num_negatives(self) -> int:
        return self.negatives.shape[0]

    def normalized(self) -> "DecompositionEmbeddings":
        """Unit-normalize every vector; raises ZeroVectorError on zero rows."""
        return DecompositionEmbeddings(
            original=l2_normalize(self.original),
            positives=np.stack([l2_normalize(p) for p in self.positives])
            if self.num_positives
            else self.positives,
            negatives=np.stack([l2_normalize(n) for n in self.negatives])
            if self.num_negatives
            else self.negatives,
        )


@dataclass(frozen=True)
class OptimizationTrace:
    """Per-step record of one optimization run.

    snapshots -- (steps + 1, d) embedding after each step; row 0 is the
                 initialization (the possibly normalized original), stored
                 exactly.
    losses    -- (steps + 1,) objective value at each snapshot.
    """

    snapshots: np.ndarray
    losses: np.ndarray = field(repr=False)

    @property
    def steps(self) -> int:
        return self.snapshots.shape[0] - 1

    @property
    def initial(self) -> np.ndarray:
        return self.snapshots[0]

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def convexity_margin(inputs: DecompositionEmbeddings, cfg: OptimizationConfig) -> float:
    """Quadratic coefficient of the objective; positive means a unique minimizer."""
    c = cfg.lambda_o
    if inputs.num_positives:
        c += cfg.lambda_p
    if inputs.num_negatives:
        c -= cfg.lambda_n
    return c


def deo_loss(e_u, inputs: DecompositionEmbeddings, cfg: OptimizationConfig) -> float:
    """Evaluate the contrastive objective at e_u."""
    e = as_vector(e_u)
    if e.shape[0] != inputs.dim:
        raise DimensionMismatchError(
            f"e_u has dimension {e.shape[0]}, inputs have {inputs.dim}"
        )
    diff_o = e - inputs.original
    loss = cfg.lambda_o * float(np.dot(diff_o, diff_o))
    if inputs.num_positives:
        diffs = e[None, :] - inputs.positives
        loss += cfg.lambda_p * float(np.mean(np.einsum("ij,ij->i", diffs, diffs)))
    if inputs.num_negatives:
        diffs = e[None, :] - inputs.negatives
        loss -= cfg.lambda_n * float(np.mean(np.einsum("ij,ij->i", diffs, diffs)))
    return loss


def deo_gradient(e_u, inputs: DecompositionEmbeddings, cfg: OptimizationConfig) -> np.ndarray:
    """Analytic gradient of deo_loss with respect to e_u."""
    e = as_vector(e_u)
    if e.shape[0] != inputs.dim:
        raise DimensionMismatchError(
            f"e_u has dimension {e.shape[0]}, inputs have {inputs.dim}"
        )
    grad = 2.0 * cfg.lambda_o * (e - inputs.original)
    if inputs.num_positives:
        grad += 2.0 * cfg.lambda_p * (e - inputs.positives.mean(axis=0))
    if inputs.num_negatives:
        grad -= 2.0 * cfg.lambda_n * (e - inputs.negatives.mean(axis=0))
    return grad


def closed_form_optimum(
    inputs: DecompositionEmbeddings, cfg: OptimizationConfig
) -> np.ndarray:
    """Unique stationary point of the objective, when one exists.

    Solving grad L = 0 gives (lp*mu_p - ln*mu_n + lo*e_o) / c with terms
    dropped for empty sets and c the convexity margin. Raises
    NotStronglyConvexError when c <= 0 (the loss is unbounded below, though
    finite-step optimization remains well defined).
    """
    c = convexity_margin(inputs, cfg)
    if c <= 0:
        raise NotStronglyConvexError(
            f"objective has no finite minimizer (quadratic coefficient {c:g} <= 0)"
        )
    numerator = cfg.lambda_o * inputs.original
    if inputs.num_positives:
        numerator = numerator + cfg.lambda_p * inputs.positives.mean(axis=0)
    if inputs.num_negatives:
        numerator = numerator - cfg.lambda_n * inputs.negatives.mean(axis=0)
    return numerator / c


def optimize_query_embedding(
    inputs: DecompositionEmbeddings, cfg: OptimizationConfig
) -> tuple[np.ndarray, OptimizationTrace]:
    """Run cfg.steps Adam updates from the original embedding.

    Returns the final embedding and the full trace. The run is deterministic:
    identical inputs and config produce bit-identical traces. With no
    positives and no negatives the gradient vanishes at the start and the
    initialization is returned unchanged.
    """
    work = inputs.normalized() if cfg.normalize_inputs else inputs
    if convexity_margin(work, cfg) <= 0 and (work.num_positives or work.num_negatives):
        logger.warning(
            "objective is not strongly convex (c=%g); running %d finite steps anyway",
            convexity_margin(work, cfg),
            cfg.steps,
        )

    e = work.original.copy()
    snapshots = [e.copy()]
    m = np.zeros_like(e)
    v = np.zeros_like(e)
    for t in range(1, cfg.steps + 1):
        g = deo_gradient(e, work, cfg)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        denom = np.sqrt(v_hat) + cfg.epsilon
        # denom is zero only where every gradient so far was zero, in which
        # case m_hat is zero too and the update must be a no-op.
        update = np.divide(
            cfg.learning_rate * m_hat,
            denom,
            out=np.zeros_like(e),
            where=denom > 0.0,
        )
        e = e - update
        snapshots.append(e.copy())

    stacked = np.stack(snapshots)
    losses = np.array([deo_loss(s, work, cfg) for s in stacked])
    return stacked[-1].copy(), OptimizationTrace(snapshots=stacked, losses=losses)
