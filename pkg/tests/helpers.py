"""Test helpers shared across modules."""

import numpy as np
import torch
import torch.nn.functional as F

from certspoof.models import loss_and_input_gradient


def finite_difference_gradient(clf, x, y, positions, h=1e-3):
    """Central finite differences of the cross-entropy loss at chosen pixels."""

    def loss_at(image):
        logits = torch.from_numpy(clf.logits(image)[None, :])
        return float(F.cross_entropy(logits, torch.tensor([y])))

    grads = []
    for pos in positions:
        plus = x.copy()
        minus = x.copy()
        plus[pos] += h
        minus[pos] -= h
        grads.append((loss_at(plus) - loss_at(minus)) / (2 * h))
    return np.asarray(grads)


def assert_gradient_matches_fd(clf, x, y, n_probes=20, rel_tol=1e-2, seed=0):
    """Analytic input gradient vs central finite differences at random pixels."""
    _, grad = loss_and_input_gradient(clf, x, y)
    rng = np.random.default_rng(seed)
    h, w, c = x.shape
    positions = [
        (int(rng.integers(h)), int(rng.integers(w)), int(rng.integers(c)))
        for _ in range(n_probes)
    ]
    fd = finite_difference_gradient(clf, x, y, positions)
    analytic = np.asarray([grad[p] for p in positions])
    scale = np.maximum(np.abs(fd), 1e-8)
    assert np.max(np.abs(analytic - fd) / scale) <= rel_tol
