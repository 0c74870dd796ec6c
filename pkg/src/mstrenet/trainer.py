"""Chunked SGD training with cross-entropy or MMI, and gradient checks."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .arch import MstreModel, backward, forward_logits
from .graph import HmmGraph, collapse_repeats, forward_backward, linear_graph
from .kernels import log_softmax_rows, semi_orthogonal_step, softmax_rows

OBJECTIVES = ("cross_entropy", "mmi")
CHUNK_FRAMES = 140
CLIP_NORM = 5.0
ORTHO_EVERY = 4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 6
    minibatch_size: int = 32
    lr_start: float = 1e-4
    lr_end: float = 1e-5
    acoustic_scale: float = 1.0
    seed: int = 0
    objective: str = "cross_entropy"
    chunk_frames: int = CHUNK_FRAMES
    self_loop_prob: float = 0.5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr_start >= self.lr_end > 0:
            raise ValueError("need lr_start >= lr_end > 0")
        if not self.acoustic_scale > 0:
            raise ValueError("acoustic_scale must be > 0")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.minibatch_size < 1 or self.chunk_frames < 1:
            raise ValueError("minibatch_size and chunk_frames must be >= 1")

    def learning_rate(self, epoch: int) -> float:
        """Geometric decay from ``lr_start`` (first epoch) to ``lr_end`` (last)."""
        if self.epochs == 1:
            return self.lr_start
        return self.lr_start * (self.lr_end / self.lr_start) ** (epoch / (self.epochs - 1))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Chunk:
    utterance_id: str
    features: np.ndarray  # chunk_frames * subsample_factor input frames
    mask: np.ndarray  # chunk_frames booleans, True on real frames
    labels: np.ndarray  # subsampled frame labels, -1 on padding

    @property
    def num_valid(self) -> int:
        return int(self.mask.sum())


def make_chunks(features, labels, chunk_frames: int = CHUNK_FRAMES, subsample_factor: int = 3,
                utterance_id: str = "utt") -> list[Chunk]:
    """Split an utterance into consecutive, non-overlapping chunks.

    ``labels`` are given per subsampled frame (``ceil(T / subsample_factor)``
    of them); the last chunk is zero-padded and masked.
    """
    if chunk_frames < 1:
        raise ValueError("chunk_frames must be >= 1")
    frames = np.asarray(getattr(features, "frames", features), dtype=np.float64)
    T = frames.shape[0] if frames.ndim == 2 else 0
    if T == 0:
        raise ValueError("no frames to chunk")
    n_sub = -(-T // subsample_factor)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != n_sub:
        raise ValueError(f"expected {n_sub} labels for {T} frames, got {len(labels)}")
    span = chunk_frames * subsample_factor
    chunks = []
    for i, start in enumerate(range(0, n_sub, chunk_frames)):
        lab = labels[start:start + chunk_frames]
        feat = frames[start * subsample_factor:start * subsample_factor + span]
        pad_lab = np.full(chunk_frames, -1, dtype=np.int64)
        pad_lab[:len(lab)] = lab
        pad_feat = np.zeros((span, frames.shape[1]))
        pad_feat[:len(feat)] = feat
        mask = np.zeros(chunk_frames, dtype=bool)
        mask[:len(lab)] = True
        chunks.append(Chunk(f"{utterance_id}-{i}", pad_feat, mask, pad_lab))
    return chunks


def subsample_labels(labels, factor: int = 3) -> np.ndarray:
    return np.asarray(labels)[::factor]


def cross_entropy_loss(posteriors: np.ndarray, labels, mask=None):
    """Mean negative log posterior over valid frames and its gradient w.r.t.
    the logits, ``(posterior - onehot) / n_valid`` on valid frames."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    T, S = posteriors.shape
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.ones(T, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if labels.shape != (T,) or mask.shape != (T,):
        raise ValueError("posteriors, labels and mask disagree on length")
    valid = np.flatnonzero(mask)
    if np.any(labels[valid] < 0) or np.any(labels[valid] >= S):
        raise ValueError("label out of range")
    n = max(len(valid), 1)
    picked = posteriors[valid, labels[valid]]
    with np.errstate(divide="ignore"):
        loss = float(-np.sum(np.log(picked)) / n)
    grad = np.zeros_like(posteriors)
    grad[valid] = posteriors[valid]
    grad[valid, labels[valid]] -= 1.0
    return loss, grad / n


def mmi_objective_and_grad(loglikes: np.ndarray, num_graph: HmmGraph, den_graph: HmmGraph,
                           kappa: float = 1.0):
    """``log Z_num - log Z_den`` and its gradient ``kappa * (occ_num - occ_den)``."""
    log_num, occ_num = forward_backward(num_graph, loglikes, kappa)
    log_den, occ_den = forward_backward(den_graph, loglikes, kappa)
    return log_num - log_den, kappa * (occ_num - occ_den)


def state_priors(label_sequences, num_states: int, floor: float = 1e-3) -> np.ndarray:
    """Label frequencies, floored and renormalized."""
    counts = np.zeros(num_states)
    for labels in label_sequences:
        labels = np.asarray(labels)
        np.add.at(counts, labels[labels >= 0], 1.0)
    priors = np.maximum(counts / max(counts.sum(), 1.0), floor)
    return priors / priors.sum()


@dataclass
class MmiObjective:
    den_graph: HmmGraph
    log_priors: np.ndarray
    kappa: float | None = None  # None: take TrainConfig.acoustic_scale (1.0 outside train)
    self_loop_prob: float = 0.5


def chunk_loss_and_grad(model: MstreModel, chunk: Chunk, objective="cross_entropy"):
    """Loss (to minimize) on one chunk and its parameter gradients."""
    cache: dict = {}
    logits = forward_logits(model, chunk.features, cache)
    if objective == "cross_entropy":
        loss, g_logits = cross_entropy_loss(softmax_rows(logits), chunk.labels, chunk.mask)
    elif isinstance(objective, MmiObjective):
        n = chunk.num_valid
        logp = log_softmax_rows(logits[:n])
        loglikes = logp - objective.log_priors
        num = linear_graph(collapse_repeats(chunk.labels[:n]), objective.self_loop_prob)
        kappa = 1.0 if objective.kappa is None else objective.kappa
        f, g_ll = mmi_objective_and_grad(loglikes, num, objective.den_graph, kappa)
        loss = -f / n
        g = -g_ll / n
        # through log-softmax: dL/dlogits = g - softmax * sum(g)
        g_logits = np.zeros_like(logits)
        g_logits[:n] = g - np.exp(logp) * g.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return loss, backward(model, cache, g_logits)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MSTRE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TrainResult:
    model: MstreModel
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)


def train(model: MstreModel, chunks, cfg: TrainConfig, objective=None, log=None) -> TrainResult:
    """Minibatch SGD over ``chunks``; returns a trained copy and the per-epoch loss.

    The shuffle order is drawn from ``cfg.seed``; minibatch gradients are
    averaged in chunk order (independent of ``MSTRE_THREADS``), L2-clipped
    and applied; factor matrices get a semi-orthogonal step every 4 updates.
    """
    chunks = list(chunks)
    if not chunks:
        raise ValueError("empty dataset")
    if objective is None:
        if cfg.objective == "mmi":
            raise ValueError("mmi training needs an MmiObjective")
        objective = "cross_entropy"
    elif isinstance(objective, MmiObjective) and objective.kappa is None:
        objective = replace(objective, kappa=cfg.acoustic_scale)
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model)
    updates = 0
    workers = _workers()
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            lr = cfg.learning_rate(epoch)
            order = rng.permutation(len(chunks))
            epoch_loss = 0.0
            for b in range(0, len(order), cfg.minibatch_size):
                batch = [chunks[i] for i in order[b:b + cfg.minibatch_size]]
                fn = lambda c: chunk_loss_and_grad(model, c, objective)  # noqa: E731
                outs = list(pool.map(fn, batch)) if pool else [fn(c) for c in batch]
                grads = {k: np.zeros_like(v) for k, v in model.params.items()}
                for loss, g in outs:
                    epoch_loss += loss
                    for k in grads:
                        grads[k] += g[k]
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values())) / len(batch)
                scale = lr / len(batch)
                if norm > CLIP_NORM:
                    scale *= CLIP_NORM / norm
                for k, g in grads.items():
                    model.params[k] -= scale * g
                updates += 1
                if updates % ORTHO_EVERY == 0:
                    apply_semi_orthogonal(model)
            mean = epoch_loss / len(chunks)
            result.losses.append(mean)
            result.learning_rates.append(lr)
            if log is not None:
                log(epoch, lr, mean)
    finally:
        if pool:
            pool.shutdown()
    return result


def apply_semi_orthogonal(model: MstreModel) -> None:
    for name in model.factor_names():
        w = model.params[name]
        taps, d_in, b = w.shape
        m = w.reshape(taps * d_in, b).T
        model.params[name] = semi_orthogonal_step(m).T.reshape(w.shape)


def frame_accuracy(model: MstreModel, chunks) -> float:
    from .arch import model_forward

    hit = total = 0
    for c in chunks:
        pred = np.argmax(model_forward(model, c.features), axis=1)
        hit += int(np.sum(pred[c.mask] == c.labels[c.mask]))
        total += c.num_valid
    return hit / total


def finite_difference_check(model: MstreModel, chunk: Chunk, objective="cross_entropy",
                            epsilon: float = 1e-5, num_params: int = 50, seed: int = 0,
                            floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients
    over ``num_params`` randomly drawn parameter entries.

    ``floor`` bounds the denominator so exactly-zero gradients compare on an
    absolute scale rather than amplifying roundoff.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    _, grads = chunk_loss_and_grad(model, chunk, objective)
    probe = model.copy()
    rng = np.random.default_rng(seed)
    names = list(probe.params)
    sizes = np.array([probe.params[n].size for n in names])
    picks = rng.choice(sizes.sum(), size=min(num_params, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for flat in picks:
        i = int(np.searchsorted(bounds, flat, side="right"))
        name = names[i]
        idx = np.unravel_index(int(flat - (bounds[i] - sizes[i])), probe.params[name].shape)
        old = probe.params[name][idx]
        probe.params[name][idx] = old + epsilon
        up, _ = chunk_loss_and_grad(probe, chunk, objective)
        probe.params[name][idx] = old - epsilon
        down, _ = chunk_loss_and_grad(probe, chunk, objective)
        probe.params[name][idx] = old
        numeric = (up - down) / (2 * epsilon)
        analytic = grads[name][idx]
        err = abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor)
        worst = max(worst, err)
    return worst
