"""SGD-with-momentum training loop and cross-validation splits.

The update rule couples L2 weight decay into the gradient:

    v <- momentum * v - lr * (g + weight_decay * w)
    w <- w + v

Batches are drawn by a seeded per-epoch shuffle, so a fixed seed gives a
bit-identical loss trace.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from ._kv import parse_kv_text, format_kv_text


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 4
    iterations: int = 500
    dropout_rate: float = 0.5
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")

    def to_text(self):
        return format_kv_text({
            "learning_rate": repr(self.learning_rate),
            "momentum": repr(self.momentum),
            "weight_decay": repr(self.weight_decay),
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "dropout_rate": repr(self.dropout_rate),
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
        })

    @classmethod
    def from_text(cls, text):
        kv = parse_kv_text(text)
        out = cls()
        casts = {"learning_rate": float, "momentum": float, "weight_decay": float,
                 "batch_size": int, "iterations": int, "dropout_rate": float,
                 "seed": int, "checkpoint_every": int}
        fields = {}
        for key, val in kv.items():
            if key not in casts:
                raise ValueError(f"unknown training config key {key!r}")
            fields[key] = casts[key](val)
        return replace(out, **fields)


# Hyperparameters as published for the pretrained-backbone regime, and a
# from-scratch desk-scale default.
PRESETS = {
    "paper": TrainConfig(learning_rate=1e-6, momentum=0.9, weight_decay=5e-4,
                         batch_size=15, iterations=3000, dropout_rate=0.5),
    "toy": TrainConfig(),
}


def init_velocity(params):
    return {k: np.zeros_like(p.data) for k, p in params.items()}


def sgd_momentum_step(params, grads, velocity, cfg):
    """One in-place momentum update over a name -> Tensor mapping."""
    for name, p in params.items():
        g = grads[name]
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for parameter {name!r}")
        v = velocity[name]
        v *= cfg.momentum
        v -= cfg.learning_rate * (g + cfg.weight_decay * p.data)
        p.data += v


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_loop(model, samples, cfg, callbacks=(), checkpoint_fn=None):
    """Optimize ``model`` on a list of (rgb, dhg, labels) samples.

    Runs ``cfg.iterations`` steps of forward (training mode, dropout
    active), loss, backward, momentum update. Returns the
    (iteration, loss) trace; parameters are updated in place. A
    non-finite loss aborts with the offending batch ids.
    """
    if len(samples) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7261]))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5f1e]))
    velocity = init_velocity(model.params)
    trace = []
    it = 0
    batches = []
    while it < cfg.iterations:
        if not batches:
            batches = _epoch_batches(len(samples), cfg.batch_size, shuffle_rng)
        idx = batches.pop(0)
        rgb = np.stack([samples[i][0] for i in idx])
        dhg = np.stack([samples[i][1] for i in idx])
        labels = np.stack([samples[i][2] for i in idx])
        loss, _ = model.loss(rgb, dhg, labels, training=True, rng=rng)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingDiverged(f"non-finite loss {loss_val} at iteration {it} "
                                   f"on batch {list(map(int, idx))}")
        for p in model.params.values():
            p.grad = None
        T.backward(loss)
        grads = {k: p.grad for k, p in model.params.items()}
        sgd_momentum_step(model.params, grads, velocity, cfg)
        trace.append((it, loss_val))
        for cb in callbacks:
            cb(it, loss_val)
        it += 1
        if checkpoint_fn and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            checkpoint_fn(it)
    return trace


def leave_one_out_splits(scene_ids):
    """One (train scenes, test scene) split per scene."""
    scene_ids = list(scene_ids)
    if len(scene_ids) < 2:
        raise ValueError(f"leave-one-out needs at least 2 scenes, got {len(scene_ids)}")
    if len(set(scene_ids)) != len(scene_ids):
        raise ValueError("duplicate scene ids")
    return [([s for s in scene_ids if s != held_out], held_out)
            for held_out in scene_ids]


def write_loss_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for it, loss in trace:
            writer.writerow([it, repr(loss)])
