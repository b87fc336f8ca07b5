"""Desk-scale base classifiers with gradient access.

Images are (H, W, C) float64 arrays in [0, 1].  Every classifier exposes a
numpy-facing interface (``logits``/``label`` and their batched forms) plus
``torch_logits`` on NCHW tensors for the gradient machinery used by
attacks and saliency.  All networks run in float64 on CPU so that
finite-difference gradient checks and bit-exact reproducibility hold.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ._rng import make_rng, split_seed

__all__ = [
    "Classifier",
    "LinearClassifier",
    "SmallConvNet",
    "Ensemble",
    "Denoiser",
    "ConvDenoiser",
    "IdentityDenoiser",
    "ConstantDenoiser",
    "DenoisedClassifier",
    "TrainingConfig",
    "TrainingReport",
    "DenoiserReport",
    "train_noise_augmented",
    "train_denoiser",
    "ensemble_logits",
    "compose_denoised",
    "loss_and_input_gradient",
    "last_conv_activations_and_gradients",
    "supports_conv_saliency",
    "accuracy",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT_VERSION = 1


def to_nchw(xs: np.ndarray) -> torch.Tensor:
    """(N,H,W,C) float array -> (N,C,H,W) float64 tensor."""
    xs = np.asarray(xs, dtype=np.float64)
    return torch.from_numpy(np.ascontiguousarray(xs.transpose(0, 3, 1, 2)))


def from_nchw(t: torch.Tensor) -> np.ndarray:
    """(N,C,H,W) tensor -> (N,H,W,C) float64 array."""
    return t.detach().cpu().numpy().transpose(0, 2, 3, 1)


class Classifier:
    """A classifier over (H,W,C) images exposing logits and labels.

    Subclasses implement ``torch_logits``; logits must be finite for any
    valid image and the label is the argmax (ties toward the lower index).
    """

    input_shape: tuple[int, int, int]
    num_classes: int

    def torch_logits(self, x: torch.Tensor) -> torch.Tensor:
        """Logits for an NCHW float64 batch; differentiable w.r.t. x."""
        raise NotImplementedError

    def parameters(self):
        return iter(())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.torch_logits(to_nchw(xs)).cpu().numpy()

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.logits_batch(x[None, ...])[0]

    def labels_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits_batch(xs), axis=1).astype(np.int64)

    def label(self, x: np.ndarray) -> int:
        return int(self.labels_batch(x[None, ...])[0])


class LinearClassifier(Classifier):
    """Linear logits over the flattened image; handy as an analytic probe."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray, input_shape: tuple[int, int, int]):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.shape[1] != int(np.prod(input_shape)):
            raise ValueError(
                f"weights expect dimension {weights.shape[1]}, image has {int(np.prod(input_shape))}"
            )
        if bias.shape != (weights.shape[0],):
            raise ValueError("bias length must match the number of classes")
        self.weights = weights
        self.bias = bias
        self.input_shape = tuple(input_shape)
        self.num_classes = weights.shape[0]
        self._w_t = torch.from_numpy(weights)
        self._b_t = torch.from_numpy(bias)

    @classmethod
    def two_class(cls, w: np.ndarray, b: float, input_shape: tuple[int, int, int]) -> "LinearClassifier":
        """Binary classifier with decision function w.x + b (class 1 when positive)."""
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        weights = np.stack([np.zeros_like(w), w])
        bias = np.array([0.0, float(b)])
        return cls(weights, bias, input_shape)

    def signed_margin(self, x: np.ndarray) -> float:
        """Signed distance of x to the decision boundary (two-class only)."""
        if self.num_classes != 2:
            raise ValueError("signed margin is defined for two-class models")
        w = self.weights[1] - self.weights[0]
        b = self.bias[1] - self.bias[0]
        return float((w @ np.asarray(x, dtype=np.float64).reshape(-1) + b) / np.linalg.norm(w))

    def torch_logits(self, x: torch.Tensor) -> torch.Tensor:
        return x.reshape(x.shape[0], -1) @ self._w_t.T + self._b_t

    def arch_descriptor(self) -> dict:
        return {
            "kind": "linear",
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.weights = np.asarray(arrays["weights"], dtype=np.float64)
        self.bias = np.asarray(arrays["bias"], dtype=np.float64)
        self._w_t = torch.from_numpy(self.weights)
        self._b_t = torch.from_numpy(self.bias)


class _ConvNetModule(nn.Module):
    def __init__(self, in_channels: int, num_classes: int, spatial: tuple[int, int],
                 conv_channels: tuple[int, int], hidden: int):
        super().__init__()
        c1, c2 = conv_channels
        self.conv1 = nn.Conv2d(in_channels, c1, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=3, padding=1)
        h, w = spatial
        self.flat_dim = c2 * (h // 2 // 2) * (w // 2 // 2)
        self.fc1 = nn.Linear(self.flat_dim, hidden)
        self.fc2 = nn.Linear(hidden, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # GELU + average pooling: smooth everywhere, so finite-difference
        # gradient checks are not tripped up by kinks
        x = F.avg_pool2d(F.gelu(self.conv1(x)), 2)
        x = F.avg_pool2d(F.gelu(self.conv2(x)), 2)
        x = F.gelu(self.fc1(x.flatten(1)))
        return self.fc2(x)


class SmallConvNet(Classifier):
    """Two-conv-layer CNN sized to train on CPU in minutes.

    The second convolution is addressable as ``last_conv`` for
    class-activation saliency.
    """

    def __init__(self, input_shape: tuple[int, int, int], num_classes: int,
                 conv_channels: tuple[int, int] = (12, 24), hidden: int = 48,
                 seed: int = 0):
        h, w, c = input_shape
        if h < 4 or w < 4:
            raise ValueError(f"input spatial size {h}x{w} too small for two pooling stages")
        self.input_shape = (h, w, c)
        self.num_classes = int(num_classes)
        self.conv_channels = tuple(int(v) for v in conv_channels)
        self.hidden = int(hidden)
        self.init_seed = int(seed)
        torch.manual_seed(self.init_seed)
        self.net = _ConvNetModule(c, self.num_classes, (h, w), self.conv_channels, self.hidden).double()
        self.training_report: TrainingReport | None = None

    @property
    def last_conv(self) -> nn.Conv2d:
        return self.net.conv2

    def parameters(self):
        return self.net.parameters()

    def torch_logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def arch_descriptor(self) -> dict:
        return {
            "kind": "small_convnet",
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "conv_channels": list(self.conv_channels),
            "hidden": self.hidden,
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.detach().cpu().numpy() for name, t in self.net.state_dict().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        state = {name: torch.from_numpy(np.asarray(a, dtype=np.float64)) for name, a in arrays.items()}
        self.net.load_state_dict(state)


class Ensemble(Classifier):
    """Soft ensemble: the arithmetic mean of its members' logits."""

    def __init__(self, members: list[Classifier]):
        if len(members) < 1:
            raise ValueError("an ensemble needs at least one member")
        dims = {m.num_classes for m in members}
        if len(dims) != 1:
            raise ValueError(f"members disagree on the number of classes: {sorted(dims)}")
        shapes = {m.input_shape for m in members}
        if len(shapes) != 1:
            raise ValueError(f"members disagree on the input shape: {sorted(shapes)}")
        self.members = list(members)
        self.num_classes = members[0].num_classes
        self.input_shape = members[0].input_shape

    def parameters(self):
        for m in self.members:
            yield from m.parameters()

    def torch_logits(self, x: torch.Tensor) -> torch.Tensor:
        total = self.members[0].torch_logits(x)
        for m in self.members[1:]:
            total = total + m.torch_logits(x)
        return total / len(self.members)

    def arch_descriptor(self) -> dict:
        return {"kind": "ensemble", "members": [m.arch_descriptor() for m in self.members]}

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for i, m in enumerate(self.members):
            for name, a in m.state_arrays().items():
                arrays[f"member{i}/{name}"] = a
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i, m in enumerate(self.members):
            prefix = f"member{i}/"
            m.load_state_arrays(
                {k[len(prefix):]: a for k, a in arrays.items() if k.startswith(prefix)}
            )


def ensemble_logits(ens: Ensemble, x: np.ndarray) -> np.ndarray:
    """Arithmetic mean of member logits at x; the ensemble label is its argmax."""
    return ens.logits(x)


class Denoiser:
    """Maps a noisy image to a cleaned image of identical shape in [0,1]."""

    input_shape: tuple[int, int, int]

    def torch_denoise(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def parameters(self):
        return iter(())

    def denoise(self, x: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return from_nchw(self.torch_denoise(to_nchw(x[None, ...])))[0]


class _DenoiserModule(nn.Module):
    def __init__(self, channels_in: int, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels_in, width, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(width, width, kernel_size=3, padding=1)
        self.conv3 = nn.Conv2d(width, channels_in, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.gelu(self.conv1(x))
        h = F.gelu(self.conv2(h))
        # sigmoid keeps the output inside (0,1) without clipping kinks
        return torch.sigmoid(self.conv3(h) + x)


class ConvDenoiser(Denoiser):
    """Small convolutional denoiser trained per noise level."""

    def __init__(self, input_shape: tuple[int, int, int], width: int = 16, seed: int = 0):
        h, w, c = input_shape
        self.input_shape = (h, w, c)
        self.width = int(width)
        self.init_seed = int(seed)
        self.trained_sigma: float | None = None
        torch.manual_seed(self.init_seed)
        self.net = _DenoiserModule(c, self.width).double()
        self.training_report: DenoiserReport | None = None

    def parameters(self):
        return self.net.parameters()

    def torch_denoise(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def arch_descriptor(self) -> dict:
        return {
            "kind": "conv_denoiser",
            "input_shape": list(self.input_shape),
            "width": self.width,
            "trained_sigma": self.trained_sigma,
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.detach().cpu().numpy() for name, t in self.net.state_dict().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        state = {name: torch.from_numpy(np.asarray(a, dtype=np.float64)) for name, a in arrays.items()}
        self.net.load_state_dict(state)


class IdentityDenoiser(Denoiser):
    """Pass-through denoiser; composing it changes nothing."""

    def __init__(self, input_shape: tuple[int, int, int]):
        self.input_shape = tuple(input_shape)

    def torch_denoise(self, x: torch.Tensor) -> torch.Tensor:
        return x


class ConstantDenoiser(Denoiser):
    """Always returns a fixed image, regardless of input."""

    def __init__(self, image: np.ndarray):
        self.image = np.asarray(image, dtype=np.float64)
        self.input_shape = tuple(self.image.shape)
        self._t = to_nchw(self.image[None, ...])

    def torch_denoise(self, x: torch.Tensor) -> torch.Tensor:
        return self._t.expand(x.shape[0], -1, -1, -1) + 0.0 * x


class DenoisedClassifier(Classifier):
    """Base classifier applied to the denoiser's output; gradients flow through both."""

    def __init__(self, base: Classifier, denoiser: Denoiser):
        if tuple(base.input_shape) != tuple(denoiser.input_shape):
            raise ValueError(
                f"denoiser shape {denoiser.input_shape} does not match classifier shape {base.input_shape}"
            )
        self.base = base
        self.denoiser = denoiser
        self.input_shape = base.input_shape
        self.num_classes = base.num_classes

    @property
    def last_conv(self):
        conv = getattr(self.base, "last_conv", None)
        if conv is None:
            raise TypeError("underlying classifier exposes no convolutional layer")
        return conv

    def parameters(self):
        yield from self.base.parameters()
        yield from self.denoiser.parameters()

    def torch_logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.base.torch_logits(self.denoiser.torch_denoise(x))

    def arch_descriptor(self) -> dict:
        return {
            "kind": "denoised",
            "base": self.base.arch_descriptor(),
            "denoiser": self.denoiser.arch_descriptor(),
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"base/{k}": a for k, a in self.base.state_arrays().items()}
        arrays.update({f"denoiser/{k}": a for k, a in self.denoiser.state_arrays().items()})
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.base.load_state_arrays(
            {k[len("base/"):]: a for k, a in arrays.items() if k.startswith("base/")}
        )
        self.denoiser.load_state_arrays(
            {k[len("denoiser/"):]: a for k, a in arrays.items() if k.startswith("denoiser/")}
        )


def compose_denoised(base: Classifier, denoiser: Denoiser) -> DenoisedClassifier:
    """Prepend a denoiser to a classifier, forming a new base classifier."""
    return DenoisedClassifier(base, denoiser)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    """Noise-augmented training settings; the seed fixes initialization,
    batch order and the per-batch noise draws."""

    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    sigma: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("batch_size and learning_rate must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class TrainingReport:
    clean_accuracy: float
    noisy_accuracy: float
    final_loss: float
    epochs: int


@dataclass(frozen=True)
class DenoiserReport:
    noisy_mse: float
    identity_mse: float
    epochs: int


def accuracy(clf: Classifier, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(images), batch_size):
        chunk = images[start:start + batch_size]
        hits += int(np.sum(clf.labels_batch(chunk) == labels[start:start + len(chunk)]))
    return hits / len(images)


def _check_dataset(dataset) -> tuple[np.ndarray, np.ndarray]:
    images = np.asarray(dataset.images, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("dataset is empty")
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    return images, labels


def train_noise_augmented(dataset, cfg: TrainingConfig) -> SmallConvNet:
    """Train a SmallConvNet on Gaussian-corrupted inputs.

    Every training input is perturbed with fresh N(0, sigma^2 I) noise so
    the resulting classifier is meaningful under a smoothing distribution
    of the same sigma.  Deterministic given (dataset, cfg).  The returned
    classifier carries a ``training_report`` with clean and noisy accuracy
    measured on the training data.
    """
    images, labels = _check_dataset(dataset)
    num_classes = int(getattr(dataset, "num_classes", labels.max() + 1))
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels out of range for the declared number of classes")
    init_seed, order_seed, noise_seed = split_seed(cfg.seed, 3)
    clf = SmallConvNet(images.shape[1:], num_classes, seed=init_seed)
    order_rng = make_rng(order_seed)
    noise_rng = make_rng(noise_seed)
    optimizer = torch.optim.Adam(clf.net.parameters(), lr=cfg.learning_rate)
    labels_t = torch.from_numpy(labels)
    final_loss = float("nan")
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(len(images))
        for start in range(0, len(images), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            noisy = images[idx] + noise_rng.standard_normal(images[idx].shape) * cfg.sigma
            loss = F.cross_entropy(clf.torch_logits(to_nchw(noisy)), labels_t[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            final_loss = float(loss.detach())
    eval_rng = make_rng(noise_seed)  # fresh stream state is irrelevant for reporting
    noisy_eval = images + eval_rng.standard_normal(images.shape) * cfg.sigma
    clf.training_report = TrainingReport(
        clean_accuracy=accuracy(clf, images, labels),
        noisy_accuracy=accuracy(clf, noisy_eval, labels),
        final_loss=final_loss,
        epochs=cfg.epochs,
    )
    return clf


def train_denoiser(dataset, cfg: TrainingConfig) -> ConvDenoiser:
    """Train a ConvDenoiser to undo N(0, sigma^2 I) corruption.

    Minimizes the mean squared error between denoise(x + noise) and x.
    The last 10% of the dataset is held out; the returned denoiser's
    ``training_report`` compares its reconstruction error on held-out
    noisy samples against the identity map on the same samples.
    """
    images, _ = _check_dataset(dataset)
    n_holdout = max(1, len(images) // 10)
    train_images = images[:-n_holdout] if len(images) > n_holdout else images
    holdout = images[-n_holdout:]
    init_seed, order_seed, noise_seed = split_seed(cfg.seed, 3)
    denoiser = ConvDenoiser(images.shape[1:], seed=init_seed)
    denoiser.trained_sigma = cfg.sigma
    order_rng = make_rng(order_seed)
    noise_rng = make_rng(noise_seed)
    optimizer = torch.optim.Adam(denoiser.net.parameters(), lr=cfg.learning_rate)
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(len(train_images))
        for start in range(0, len(train_images), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            clean = to_nchw(train_images[idx])
            noisy = clean + torch.from_numpy(
                noise_rng.standard_normal(clean.shape) * cfg.sigma
            )
            loss = F.mse_loss(denoiser.torch_denoise(noisy), clean)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    eval_noise = make_rng(noise_seed + 1 if noise_seed + 1 < 2**63 else 0).standard_normal(holdout.shape) * cfg.sigma
    noisy_holdout = holdout + eval_noise
    with torch.no_grad():
        recon = from_nchw(denoiser.torch_denoise(to_nchw(noisy_holdout)))
    denoiser.training_report = DenoiserReport(
        noisy_mse=float(np.mean((recon - holdout) ** 2)),
        identity_mse=float(np.mean((noisy_holdout - holdout) ** 2)),
        epochs=cfg.epochs,
    )
    return denoiser


# ---------------------------------------------------------------------------
# Gradient access
# ---------------------------------------------------------------------------


def loss_and_input_gradient(clf: Classifier, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Cross-entropy loss of clf at (x, y) and its gradient w.r.t. x.

    The loss is computed from logits with log-sum-exp stabilization; the
    returned gradient has the image's (H,W,C) shape and is always finite.
    """
    if not 0 <= y < clf.num_classes:
        raise ValueError(f"label {y} out of range for {clf.num_classes} classes")
    x_t = to_nchw(np.asarray(x)[None, ...]).requires_grad_(True)
    loss = F.cross_entropy(clf.torch_logits(x_t), torch.tensor([y]))
    loss.backward()
    return float(loss.detach()), from_nchw(x_t.grad)[0]


def supports_conv_saliency(clf: Classifier) -> bool:
    try:
        return getattr(clf, "last_conv", None) is not None
    except TypeError:
        return False


def last_conv_activations_and_gradients(
    clf: Classifier, x: np.ndarray, y: int
) -> tuple[np.ndarray, np.ndarray]:
    """Feature maps of the last conv layer and d(score_y)/d(feature maps).

    ``score_y`` is the pre-softmax logit of class y.  Returns two arrays
    of identical (num_maps, h, w) shape.

    :raises TypeError: if the classifier exposes no convolutional layer
    """
    conv = getattr(clf, "last_conv", None)
    if conv is None:
        raise TypeError(f"{type(clf).__name__} exposes no last convolutional layer")
    if not 0 <= y < clf.num_classes:
        raise ValueError(f"label {y} out of range for {clf.num_classes} classes")
    captured: dict[str, torch.Tensor] = {}
    fwd = conv.register_forward_hook(lambda module, inp, out: captured.__setitem__("acts", out))
    bwd = conv.register_full_backward_hook(
        lambda module, grad_in, grad_out: captured.__setitem__("grads", grad_out[0])
    )
    try:
        x_t = to_nchw(np.asarray(x)[None, ...]).requires_grad_(True)
        logits = clf.torch_logits(x_t)
        clf.zero_grad()
        logits[0, y].backward()
    finally:
        fwd.remove()
        bwd.remove()
        clf.zero_grad()
    acts = captured["acts"][0].detach().cpu().numpy()
    grads = captured["grads"][0].detach().cpu().numpy()
    return acts, grads


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(model, path) -> None:
    """Write a versioned container with the architecture descriptor and
    float64 parameter tensors; round-trips bit-exactly."""
    meta = {"format_version": CHECKPOINT_FORMAT_VERSION, "arch": model.arch_descriptor()}
    arrays = {f"param/{name}": a for name, a in model.state_arrays().items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=json.dumps(meta, sort_keys=True), **arrays)


def _build_from_descriptor(arch: dict):
    kind = arch["kind"]
    if kind == "linear":
        shape = tuple(arch["input_shape"])
        dim = int(np.prod(shape))
        return LinearClassifier(np.zeros((arch["num_classes"], dim)), np.zeros(arch["num_classes"]), shape)
    if kind == "small_convnet":
        return SmallConvNet(
            tuple(arch["input_shape"]), arch["num_classes"],
            conv_channels=tuple(arch["conv_channels"]), hidden=arch["hidden"],
        )
    if kind == "conv_denoiser":
        d = ConvDenoiser(tuple(arch["input_shape"]), width=arch["width"])
        d.trained_sigma = arch.get("trained_sigma")
        return d
    if kind == "ensemble":
        return Ensemble([_build_from_descriptor(m) for m in arch["members"]])
    if kind == "denoised":
        return DenoisedClassifier(
            _build_from_descriptor(arch["base"]),
            _build_from_descriptor(arch["denoiser"]),
        )
    raise ValueError(f"unknown architecture kind {kind!r}")


def load_checkpoint(path):
    """Rebuild a model from :func:`save_checkpoint` output."""
    with np.load(path, allow_pickle=False) as bundle:
        meta = json.loads(str(bundle["meta"][()]))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {meta.get('format_version')}")
        arrays = {key[len("param/"):]: bundle[key] for key in bundle.files if key.startswith("param/")}
    model = _build_from_descriptor(meta["arch"])
    model.load_state_arrays(arrays)
    return model
