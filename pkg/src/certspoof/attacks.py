"""Certificate-spoofing attacks under Gaussian noise.

The main attack runs projected gradient ascent on the expected
cross-entropy over a batch of Gaussian noise draws, so the crafted
perturbation transfers to the smoothed classifier rather than a single
point.  The perturbation support is restricted to a binary salient-region
mask and its L2 norm to a budget epsilon.  The same code path attacks
single models, logit-averaged ensembles and denoiser compositions, since
all of them expose the same forward interface.

The shadow baseline replaces the support constraint with smoothness
penalties (total variation, per-channel mean shift, cross-channel
dissimilarity); its bounded variant adds a ball projection so attacks are
comparable at equal budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ._rng import make_rng
from .models import Classifier
from .saliency_mask import SalientRegionMask

__all__ = [
    "AttackConfig",
    "ShadowConfig",
    "AttackResult",
    "project_and_mask",
    "ghostcert",
    "shadow_attack",
    "shadow_attack_bounded",
    "total_variation",
]


@dataclass(frozen=True)
class AttackConfig:
    """Masked-attack settings.

    ``projection_mode`` "ball" rescales the perturbation only when it
    leaves the epsilon ball (standard PGD); "sphere" always rescales to
    exactly epsilon, replicating the literal projection-and-mask step.
    ``mask_inside_forward`` applies the mask before the forward pass so
    gradients match the feasible set; switching it off reproduces the
    literal unmasked gradient evaluation.
    """

    epsilon: float
    step_size: float = 1e-4
    steps: int = 100
    noise_batch: int = 32
    sigma: float = 0.25
    targeted: bool = False
    target_label: int | None = None
    seed: int = 0
    mask_inside_forward: bool = True
    projection_mode: str = "ball"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.steps < 0 or self.noise_batch < 1:
            raise ValueError("steps must be >= 0 and noise_batch >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.projection_mode not in ("ball", "sphere"):
            raise ValueError(f"unknown projection mode {self.projection_mode!r}")
        if self.targeted and self.target_label is None:
            raise ValueError("targeted attacks need a target_label")


@dataclass(frozen=True)
class ShadowConfig:
    """Shadow-baseline settings; ``l2_bound`` enables the bounded variant."""

    step_size: float = 0.05
    steps: int = 100
    tv_weight: float = 0.3
    color_mean_weight: float = 1.0
    channel_sim_weight: float = 0.5
    l2_bound: float | None = None
    sigma: float = 0.25
    noise_batch: int = 32
    targeted: bool = False
    target_label: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.steps < 0 or self.noise_batch < 1:
            raise ValueError("steps must be >= 0 and noise_batch >= 1")
        if min(self.tv_weight, self.color_mean_weight, self.channel_sim_weight) < 0:
            raise ValueError("penalty weights must be >= 0")
        if self.l2_bound is not None and self.l2_bound <= 0:
            raise ValueError("l2_bound must be positive when given")
        if self.targeted and self.target_label is None:
            raise ValueError("targeted attacks need a target_label")


@dataclass(frozen=True)
class AttackResult:
    """Perturbation, adversarial image and bookkeeping for one attack run."""

    delta: np.ndarray
    adversarial: np.ndarray
    l2_norm: float
    linf_norm: float
    total_variation: float
    loss_trace: tuple[float, ...]
    zero_gradient_steps: tuple[int, ...]
    config: AttackConfig | ShadowConfig
    seed: int


def total_variation(delta: np.ndarray) -> float:
    """Anisotropic total variation: absolute vertical plus horizontal
    neighbor differences, summed over channels."""
    d = np.asarray(delta, dtype=np.float64)
    if d.ndim == 2:
        d = d[..., None]
    tv = np.abs(np.diff(d, axis=0)).sum() + np.abs(np.diff(d, axis=1)).sum()
    return float(tv)


def _as_mask_array(mask: SalientRegionMask | np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    m = mask.mask if isinstance(mask, SalientRegionMask) else np.asarray(mask)
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} does not match image spatial shape {shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask must be binary")
    return m.astype(np.float64)


def project_and_mask(delta: np.ndarray, epsilon: float,
                     mask: SalientRegionMask | np.ndarray,
                     mode: str = "ball") -> np.ndarray:
    """Project a perturbation onto the budget and zero it off-mask.

    "sphere" rescales to L2 norm exactly epsilon before masking (a zero
    perturbation stays zero); "ball" rescales only when the norm exceeds
    epsilon.  Either way the result has norm <= epsilon and support
    inside the mask.
    """
    delta = np.asarray(delta, dtype=np.float64)
    m = _as_mask_array(mask, delta.shape[:2])[..., None]
    norm = float(np.linalg.norm(delta))
    if mode == "sphere":
        if norm == 0.0:
            return np.zeros_like(delta)
        return (epsilon * delta / norm) * m
    if mode == "ball":
        if norm > epsilon:
            delta = delta * (epsilon / norm)
        return delta * m
    raise ValueError(f"unknown projection mode {mode!r}")


def _tv_torch(d: torch.Tensor) -> torch.Tensor:
    return (d[:, :, 1:, :] - d[:, :, :-1, :]).abs().sum() + (d[:, :, :, 1:] - d[:, :, :, :-1]).abs().sum()


def _noise_batch_nchw(rng: np.random.Generator, count: int, shape: tuple[int, int, int],
                      sigma: float) -> torch.Tensor:
    noise = rng.standard_normal((count, *shape)) * sigma
    return torch.from_numpy(np.ascontiguousarray(noise.transpose(0, 3, 1, 2)))


def ghostcert(clf_base: Classifier, x: np.ndarray, label_or_target: int,
              mask: SalientRegionMask | np.ndarray, cfg: AttackConfig) -> AttackResult:
    """Craft a masked, budget-bounded perturbation against a smoothed target.

    Each step draws ``cfg.noise_batch`` Gaussian samples, accumulates the
    gradient of the summed cross-entropy at the noisy perturbed inputs
    (negated for targeted attacks), takes a normalized ascent step of size
    ``cfg.step_size`` and re-projects onto the masked epsilon constraint.
    Deterministic given (classifier, x, mask, cfg).

    ``label_or_target`` is the source label for untargeted attacks and the
    target label when ``cfg.targeted``.
    """
    x = np.asarray(x, dtype=np.float64)
    m = _as_mask_array(mask, x.shape[:2])
    if cfg.targeted and cfg.target_label is not None and cfg.target_label != label_or_target:
        raise ValueError("label_or_target disagrees with cfg.target_label")
    if not 0 <= label_or_target < clf_base.num_classes:
        raise ValueError(f"label {label_or_target} out of range")
    x_t = torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))[None, ...]
    m_t = torch.from_numpy(m)[None, None, ...]
    labels_t = torch.full((cfg.noise_batch,), label_or_target, dtype=torch.long)
    rng = make_rng(cfg.seed)
    delta = np.zeros_like(x)
    loss_trace: list[float] = []
    zero_grad_steps: list[int] = []
    for step in range(cfg.steps):
        noise = _noise_batch_nchw(rng, cfg.noise_batch, x.shape, cfg.sigma)
        d_t = torch.from_numpy(np.ascontiguousarray(delta.transpose(2, 0, 1)))[None, ...]
        d_t.requires_grad_(True)
        d_eff = d_t * m_t if cfg.mask_inside_forward else d_t
        logits = clf_base.torch_logits(x_t + noise + d_eff)
        loss = F.cross_entropy(logits, labels_t, reduction="sum")
        grad_t, = torch.autograd.grad(loss, d_t)
        loss_trace.append(float(loss.detach()))
        grad = grad_t[0].numpy().transpose(1, 2, 0)
        if cfg.targeted:
            grad = -grad
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm == 0.0:
            zero_grad_steps.append(step)
            continue
        delta = delta + cfg.step_size * grad / grad_norm
        delta = project_and_mask(delta, cfg.epsilon, m, cfg.projection_mode)
    adversarial = np.clip(x + delta, 0.0, 1.0)
    return AttackResult(
        delta=delta,
        adversarial=adversarial,
        l2_norm=float(np.linalg.norm(delta)),
        linf_norm=float(np.max(np.abs(delta))) if delta.size else 0.0,
        total_variation=total_variation(delta),
        loss_trace=tuple(loss_trace),
        zero_gradient_steps=tuple(zero_grad_steps),
        config=cfg,
        seed=cfg.seed,
    )


def shadow_attack(clf_base: Classifier, x: np.ndarray, label_or_target: int,
                  cfg: ShadowConfig) -> AttackResult:
    """Noise-averaged gradient ascent with smoothness penalties.

    Maximizes mean cross-entropy over the noise batch minus the weighted
    total-variation, per-channel-mean and channel-dissimilarity penalties;
    no support mask.  With ``cfg.l2_bound`` set, the perturbation is
    projected onto that L2 ball after every step.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= label_or_target < clf_base.num_classes:
        raise ValueError(f"label {label_or_target} out of range")
    if cfg.targeted and cfg.target_label is not None and cfg.target_label != label_or_target:
        raise ValueError("label_or_target disagrees with cfg.target_label")
    full_mask = np.ones(x.shape[:2], dtype=np.uint8)
    x_t = torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))[None, ...]
    labels_t = torch.full((cfg.noise_batch,), label_or_target, dtype=torch.long)
    rng = make_rng(cfg.seed)
    delta = np.zeros_like(x)
    loss_trace: list[float] = []
    zero_grad_steps: list[int] = []
    for step in range(cfg.steps):
        noise = _noise_batch_nchw(rng, cfg.noise_batch, x.shape, cfg.sigma)
        d_t = torch.from_numpy(np.ascontiguousarray(delta.transpose(2, 0, 1)))[None, ...]
        d_t.requires_grad_(True)
        logits = clf_base.torch_logits(x_t + noise + d_t)
        attack_term = F.cross_entropy(logits, labels_t, reduction="mean")
        if cfg.targeted:
            attack_term = -attack_term
        channel_means = d_t.mean(dim=(2, 3))
        color_mean_pen = (channel_means ** 2).sum()
        cross_channel_mean = d_t.mean(dim=1, keepdim=True)
        channel_sim_pen = ((d_t - cross_channel_mean) ** 2).mean()
        objective = (
            attack_term
            - cfg.tv_weight * _tv_torch(d_t)
            - cfg.color_mean_weight * color_mean_pen
            - cfg.channel_sim_weight * channel_sim_pen
        )
        grad_t, = torch.autograd.grad(objective, d_t)
        loss_trace.append(float(objective.detach()))
        grad = grad_t[0].numpy().transpose(1, 2, 0)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm == 0.0:
            zero_grad_steps.append(step)
            continue
        delta = delta + cfg.step_size * grad / grad_norm
        if cfg.l2_bound is not None:
            delta = project_and_mask(delta, cfg.l2_bound, full_mask, "ball")
    adversarial = np.clip(x + delta, 0.0, 1.0)
    return AttackResult(
        delta=delta,
        adversarial=adversarial,
        l2_norm=float(np.linalg.norm(delta)),
        linf_norm=float(np.max(np.abs(delta))) if delta.size else 0.0,
        total_variation=total_variation(delta),
        loss_trace=tuple(loss_trace),
        zero_gradient_steps=tuple(zero_grad_steps),
        config=cfg,
        seed=cfg.seed,
    )


def shadow_attack_bounded(clf_base: Classifier, x: np.ndarray, label_or_target: int,
                          cfg: ShadowConfig) -> AttackResult:
    """Shadow attack with a mandatory L2 ball projection each step."""
    if cfg.l2_bound is None or cfg.l2_bound <= 0:
        raise ValueError("bounded shadow attack requires a positive l2_bound")
    return shadow_attack(clf_base, x, label_or_target, cfg)
