"""Shared fixtures: toy corpus, a trained toy model, and a finite-difference
gradient checker."""

from __future__ import annotations

import time

import numpy as np
import pytest

from rtlfuse.encoders import EncoderParams
from rtlfuse.pretrain import TrainConfig, run_pretraining
from rtlfuse.toydata import build_toy_bundles

TOY_ENCODER = EncoderParams(
    d_model=32, graph_layers=1, summary_layers=1, code_layers=1,
    fusion_layers=1, heads=2, netlist_hidden=16, mgm_hidden=16)

TOY_TRAIN = TrainConfig(
    seed=0, steps=200, batch_size=8, lr_peak=2e-3, lr_floor=2e-4,
    warmup_iters=10, netlist_steps=20)


@pytest.fixture(scope="session")
def toy_bundles():
    bundles, labels = build_toy_bundles(n_classes=5, variants_per_anchor=9, seed=0)
    return bundles, labels


@pytest.fixture(scope="session")
def toy_training(toy_bundles):
    """One 200-step pre-training run shared by convergence/retrieval tests."""
    bundles, _labels = toy_bundles
    start = time.time()
    model, reports = run_pretraining(bundles, TOY_ENCODER, TOY_TRAIN)
    elapsed = time.time() - start
    return model, reports, bundles, elapsed


def fd_gradient_check(loss_fn, params: dict, h: float = 1e-4,
                      coords_per_tensor: int = 4, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    Every parameter tensor is probed at `coords_per_tensor` seeded coordinates
    plus its largest-|gradient| coordinate. The numeric side combines central
    differences at the base step h and at h/2 (Richardson), cancelling the
    quadratic truncation term that would otherwise dominate the comparison on
    high-curvature coordinates. The relative-error denominator is floored at
    1e-6: below that, the difference quotient is roundoff noise, not signal.
    """
    for t in params.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for k, t in params.items()}
    rng = np.random.default_rng(seed)

    def central(flat, idx, step):
        orig = flat[idx]
        flat[idx] = orig + step
        hi = loss_fn().item()
        flat[idx] = orig - step
        lo = loss_fn().item()
        flat[idx] = orig
        return (hi - lo) / (2 * step)

    worst = 0.0
    for name, t in sorted(params.items()):
        flat = t.data.reshape(-1)
        n = flat.size
        picks = set(rng.integers(0, n, size=min(coords_per_tensor, n)).tolist())
        picks.add(int(np.argmax(np.abs(analytic[name]))))
        for idx in sorted(picks):
            d_h = central(flat, idx, h)
            d_h2 = central(flat, idx, h / 2)
            numeric = (4.0 * d_h2 - d_h) / 3.0
            a = analytic[name].reshape(-1)[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst
