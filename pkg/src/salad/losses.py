"""Loss functions for contrastive fine-tuning.

Three pieces: plain classification cross-entropy, a margin triplet loss over
pooled sentence representations, and their convex mixture.  The triplet loss
ships in two reductions — a single hinge applied to the batch-mean distance
gap (the default), and the conventional per-example hinge — because the two
disagree whenever some examples violate the margin and others do not.

All functions are written against raw tensor ops so they work in any float
dtype; gradient tests run them in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import torch
from torch import Tensor

from salad.errors import ConfigError

_NORM_EPS = 1e-12


class DistanceKind(Enum):
    EUCLIDEAN = "euclidean"
    COSINE_DISTANCE = "cosine_distance"


class TripletMode(Enum):
    BATCH_MEAN_HINGE = "batch_mean_hinge"
    PER_EXAMPLE_HINGE = "per_example_hinge"


@dataclass
class LossConfig:
    lambda_weight: float = 0.5
    margin: float = 1.0
    distance: DistanceKind = DistanceKind.EUCLIDEAN
    triplet_mode: TripletMode = TripletMode.BATCH_MEAN_HINGE

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ConfigError(f"lambda_weight must be in [0, 1], got {self.lambda_weight}")
        if self.margin < 0.0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if isinstance(self.distance, str):
            self.distance = DistanceKind(self.distance)
        if isinstance(self.triplet_mode, str):
            self.triplet_mode = TripletMode(self.triplet_mode)


def cross_entropy(logits: Tensor, labels: Union[Tensor, Sequence[int]]) -> Tensor:
    """Mean negative log softmax probability of the gold class.

    Log-probabilities come from a log-sum-exp shift, so large logits do not
    overflow.
    """
    if logits.dim() != 2:
        raise ConfigError(f"logits must be 2-D [batch, classes], got shape {tuple(logits.shape)}")
    if not isinstance(labels, Tensor):
        labels = torch.tensor(list(labels), dtype=torch.long, device=logits.device)
    if labels.dim() != 1 or labels.shape[0] != logits.shape[0]:
        raise ConfigError(
            f"labels shape {tuple(labels.shape)} does not match logits {tuple(logits.shape)}"
        )
    n_classes = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise ConfigError(f"label index out of range for {n_classes} classes")
    log_probs = logits - torch.logsumexp(logits, dim=-1, keepdim=True)
    gold = log_probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    return -gold.mean()


def pair_distance(a: Tensor, b: Tensor, kind: DistanceKind) -> Tensor:
    """Row-wise distance between two [m, hidden] matrices.

    Euclidean adds a tiny epsilon under the square root so the gradient
    stays finite when a row pair coincides; cosine distance is 1 - cosine
    similarity with norm clamping for the same reason.
    """
    if a.shape != b.shape:
        raise ConfigError(f"representation shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if kind is DistanceKind.EUCLIDEAN:
        return torch.sqrt(((a - b) ** 2).sum(dim=-1) + _NORM_EPS)
    norms = torch.linalg.vector_norm(a, dim=-1) * torch.linalg.vector_norm(b, dim=-1)
    cosine = (a * b).sum(dim=-1) / torch.clamp(norms, min=_NORM_EPS)
    return 1.0 - cosine


def triplet_loss(
    anchor_reprs: Tensor, pos_reprs: Tensor, neg_reprs: Tensor, cfg: LossConfig
) -> Tensor:
    """Margin hinge on anchor-positive vs anchor-negative distances.

    BATCH_MEAN_HINGE applies one hinge to the batch mean of the distance
    gaps plus the margin; PER_EXAMPLE_HINGE hinges each triplet separately
    and averages.  Both are zero exactly when the (mean or per-example)
    margin-violating quantity is non-positive.
    """
    if anchor_reprs.shape != pos_reprs.shape or anchor_reprs.shape != neg_reprs.shape:
        raise ConfigError(
            "anchor/positive/negative representation shapes differ: "
            f"{tuple(anchor_reprs.shape)}, {tuple(pos_reprs.shape)}, {tuple(neg_reprs.shape)}"
        )
    if anchor_reprs.shape[0] < 1:
        raise ConfigError("triplet loss needs at least one triplet")
    d_pos = pair_distance(anchor_reprs, pos_reprs, cfg.distance)
    d_neg = pair_distance(anchor_reprs, neg_reprs, cfg.distance)
    gap = d_pos - d_neg
    if cfg.triplet_mode is TripletMode.BATCH_MEAN_HINGE:
        return torch.clamp(gap.mean() + cfg.margin, min=0.0)
    return torch.clamp(gap + cfg.margin, min=0.0).mean()


def combined_loss(
    ce: Union[Tensor, float], cl: Union[Tensor, float], lambda_weight: float
) -> Union[Tensor, float]:
    """Convex mixture (1 - lambda) * ce + lambda * cl, boundary-exact.

    The boundaries skip the arithmetic entirely so lambda 0 returns ce
    itself and lambda 1 returns cl itself, bit for bit.
    """
    if not 0.0 <= lambda_weight <= 1.0:
        raise ConfigError(f"lambda_weight must be in [0, 1], got {lambda_weight}")
    if lambda_weight == 0.0:
        return ce
    if lambda_weight == 1.0:
        return cl
    return (1.0 - lambda_weight) * ce + lambda_weight * cl
