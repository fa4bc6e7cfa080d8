"""Loss functions for lesion and temperature surrogate training.

The lesion task uses a soft Dice loss. The temperature task combines plain
MSE, a weighted MSE that up-weights voxels whose true temperature exceeds
50 degC, and a Dice term on softly thresholded >50 degC maps; the soft
sigmoid gate (default sharpness 1 per degC) keeps the threshold
differentiable during training, while evaluation metrics use hard thresholds.
"""

from __future__ import annotations

import torch

HOT_THRESHOLD_C = 50.0
DEFAULT_GATE_SHARPNESS = 1.0  # 1/degC
DEFAULT_HOT_WEIGHT = 10.0


def _check_shapes(pred: torch.Tensor, truth: torch.Tensor) -> None:
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(truth.shape)}")


def dice_loss(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """1 - 2*sum(xy) / (sum(x^2) + sum(y^2)); zero when both fields are empty."""
    _check_shapes(pred, truth)
    num = 2.0 * (pred * truth).sum()
    den = (pred * pred).sum() + (truth * truth).sum()
    if den == 0:
        return torch.zeros((), dtype=pred.dtype, device=pred.device)
    return 1.0 - num / den


def weighted_mse(pred: torch.Tensor, truth: torch.Tensor, hot_weight: float = DEFAULT_HOT_WEIGHT) -> torch.Tensor:
    """Mean of (pred-truth)^2 * (w*m + (1-m)) with m = (truth > 50 degC)."""
    _check_shapes(pred, truth)
    mask = (truth > HOT_THRESHOLD_C).to(pred.dtype)
    weights = hot_weight * mask + (1.0 - mask)
    return ((pred - truth) ** 2 * weights).mean()


def soft_hot_mask(field: torch.Tensor, sharpness: float = DEFAULT_GATE_SHARPNESS) -> torch.Tensor:
    return torch.sigmoid(sharpness * (field - HOT_THRESHOLD_C))


def dice50_loss(
    pred: torch.Tensor, truth: torch.Tensor, sharpness: float = DEFAULT_GATE_SHARPNESS,
    eps: float = 1.0e-6,
) -> torch.Tensor:
    """Dice loss between softly thresholded >50 degC maps of both fields.

    The smoothing term makes a pair of fields with nothing near the threshold
    score ~0 (matching the hard-threshold empty/empty convention) instead of
    comparing two vanishing sigmoid tails.
    """
    _check_shapes(pred, truth)
    mp = soft_hot_mask(pred, sharpness)
    mt = soft_hot_mask(truth, sharpness)
    num = 2.0 * (mp * mt).sum() + eps
    den = (mp * mp).sum() + (mt * mt).sum() + eps
    return 1.0 - num / den


def combined_loss(
    pred: torch.Tensor,
    truth: torch.Tensor,
    alpha: float,
    beta: float,
    gamma: float,
    hot_weight: float = DEFAULT_HOT_WEIGHT,
    sharpness: float = DEFAULT_GATE_SHARPNESS,
) -> torch.Tensor:
    """alpha * MSE + beta * weighted MSE + gamma * soft Dice(>50)."""
    _check_shapes(pred, truth)
    total = pred.new_zeros(())
    if alpha:
        total = total + alpha * ((pred - truth) ** 2).mean()
    if beta:
        total = total + beta * weighted_mse(pred, truth, hot_weight)
    if gamma:
        total = total + gamma * dice50_loss(pred, truth, sharpness)
    return total
