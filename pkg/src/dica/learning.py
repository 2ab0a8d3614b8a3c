"""Localized EM learning for the DICA graph.

Each learnable block sees only the forward message arriving at its input and
the backward message at its output.  For a block with table ``P`` and
examples ``(f_n, b_n)`` the local log-likelihood is
``sum_n log(f_n^T P b_n)``; one EM cycle is the multiplicative update

    P'[k, l] ~ P[k, l] * sum_n f_n[k] b_n[l] / (f_n^T P b_n)

followed by row normalization.  Source priors are re-estimated as the
average source posterior.
"""
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import messages as msg
from .errors import ContradictoryEvidence, DimensionError, MissingLabelBlock
from .graph import propagate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    inner_cycles: int = 5
    seed: int = 0
    supervised: bool = False
    init_perturbation: float = 0.01
    cpt_spread: float = 0.2

    def __post_init__(self):
        if self.epochs < 1 or self.inner_cycles < 1:
            raise ValueError("epochs and inner_cycles must be at least 1")


@dataclass
class BlockStats:
    """Per-example input forwards ``f`` (T, K) and output backwards ``b`` (T, L)."""

    f: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.f.ndim != 2 or self.b.ndim != 2 or len(self.f) != len(self.b):
            raise DimensionError(f"inconsistent block statistics {self.f.shape} / {self.b.shape}")

    def __len__(self):
        return len(self.f)


@dataclass
class EpochStats:
    """Everything collected from one pass over the data."""

    visible: list
    label: BlockStats
    source_posteriors: list
    skipped: int
    # stacked views used by the batched update, (N, T, |S|) and (N, T, max |X_j|)
    visible_f: np.ndarray = field(default=None, repr=False)
    visible_b: np.ndarray = field(default=None, repr=False)


def collect_stats(model, batch):
    """Propagate every example and record the messages each block needs.

    Examples whose evidence contradicts the model are skipped and counted.
    """
    M, N, S = model.M, model.N, model.product_size
    T = len(batch)
    L = max(model.visible_sizes)
    F = np.empty((N, T, S))
    B = np.empty((N, T, L))
    label_f = np.empty((T, S)) if model.has_label else None
    label_b = np.empty((T, model.label_size)) if model.has_label else None
    posts = [np.empty((T, n)) for n in model.source_sizes]
    keep = np.ones(T, dtype=bool)
    for t, ev in enumerate(batch):
        try:
            state = propagate(model, ev)
            src = state.source_posteriors()
        except ContradictoryEvidence:
            keep[t] = False
            continue
        F[:, t] = state.diverter_out[M:M + N]
        B[:, t] = ev.backward_matrix(model)
        if model.has_label:
            label_f[t] = state.diverter_out[-1]
            label_b[t] = state.label_backward
        for i, p in enumerate(src):
            posts[i][t] = p
    skipped = int(T - keep.sum())
    if skipped:
        log.warning("skipped %d of %d examples with contradictory evidence", skipped, T)
        F, B = F[:, keep], B[:, keep]
        posts = [p[keep] for p in posts]
        if model.has_label:
            label_f, label_b = label_f[keep], label_b[keep]
    visible = [BlockStats(F[j], B[j, :, :n]) for j, n in enumerate(model.visible_sizes)]
    label = BlockStats(label_f, label_b) if model.has_label else None
    return EpochStats(visible, label, posts, skipped, F, B)


def _em_cycles(P, F, B, cycles):
    """Run ``cycles`` multiplicative updates on a stack of blocks.

    ``P`` is (n, K, L), ``F`` is (n, T, K), ``B`` is (n, T, L).  Returns the
    new stack and the number of (block, example) terms skipped for a zero
    denominator in the last cycle.
    """
    P = np.array(P, dtype=np.float64)
    skipped = 0
    for _ in range(cycles):
        denom = np.einsum("ntl,ntl->nt", F @ P, B)
        bad = denom <= 0
        skipped = int(bad.sum())
        W = B / np.where(bad, 1.0, denom)[..., None]
        W[bad] = 0.0
        new = P * (np.swapaxes(F, 1, 2) @ W)
        mass = new.sum(axis=2, keepdims=True)
        P = np.where(mass > 0, new / np.where(mass > 0, mass, 1.0), P)
    return P, skipped


def update_cpt(P, stats, cycles):
    """Apply ``cycles`` localized EM updates to one table."""
    P = msg.as_cpt(P)
    if len(stats) == 0:
        raise ValueError("no statistics to learn from")
    if stats.f.shape[1] != P.shape[0] or stats.b.shape[1] != P.shape[1]:
        raise DimensionError(f"statistics {stats.f.shape}/{stats.b.shape} do not fit table {P.shape}")
    out, _ = _em_cycles(P[None], stats.f[None], stats.b[None], cycles)
    return out[0]


def local_loglik(P, stats):
    """``sum_n log(f_n^T P b_n)`` for one block."""
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(np.einsum("tk,kl,tl->t", stats.f, P, stats.b))))


def _stack_loglik(P, F, B):
    with np.errstate(divide="ignore"):
        return np.log(np.einsum("ntl,ntl->nt", F @ P, B)).sum(axis=1)


def update_prior(prior, posteriors):
    """Average of the source posteriors."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    if posteriors.ndim != 2 or len(posteriors) == 0:
        raise ValueError("need a non-empty list of posteriors")
    if posteriors.shape[1] != len(prior):
        raise DimensionError("posterior length does not match the prior")
    return msg.normalize(posteriors.sum(axis=0))


@dataclass
class EpochRecord:
    epoch: int
    loglik_before: float
    loglik_after: float
    skipped: int
    block_loglik: np.ndarray = field(repr=False)


@dataclass
class TrainReport:
    """Per-epoch mean local log-likelihood (per example, averaged over blocks)."""

    epochs: list = field(default_factory=list)

    @property
    def skipped(self):
        return sum(e.skipped for e in self.epochs)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("epoch,mean_loglik_before,mean_loglik_after,skipped\n")
        for e in self.epochs:
            buf.write(f"{e.epoch},{e.loglik_before:.6f},{e.loglik_after:.6f},{e.skipped}\n")
        return buf.getvalue()


def train(model, data, config=TrainConfig()):
    """Fit visible tables, the label table and the priors to ``data``.

    ``data`` is a sequence of :class:`~dica.graph.Evidence`.  Each epoch
    collects messages once with the current parameters, then runs
    ``config.inner_cycles`` updates inside every block on those frozen
    messages and re-estimates the priors.
    """
    data = list(data)
    if not data:
        raise ValueError("empty training set")
    if config.supervised:
        if not model.has_label:
            raise MissingLabelBlock("supervised training needs a model with a label block")
        if any(ev.label is None for ev in data):
            raise ValueError("supervised training needs a label on every example")
    elif any(ev.label is not None for ev in data):
        raise ValueError("labels supplied but config.supervised is False")

    report = TrainReport()
    for epoch in range(config.epochs):
        stats = collect_stats(model, data)
        T = len(data) - stats.skipped
        if T == 0:
            raise ContradictoryEvidence("every training example contradicts the model")
        F, B = stats.visible_f, stats.visible_b
        stack = np.array(model.visible_stack)
        before = _stack_loglik(stack, F, B)
        stack, _ = _em_cycles(stack, F, B, config.inner_cycles)
        after = _stack_loglik(stack, F, B)
        cpts = [stack[j, :, :n] for j, n in enumerate(model.visible_sizes)]

        label = model.label_cpt
        if config.supervised:
            label = update_cpt(label, stats.label, config.inner_cycles)
        priors = [update_prior(p, post) for p, post in zip(model.priors, stats.source_posteriors)]
        model = replace(model, priors=tuple(priors), visible_cpts=tuple(cpts), label_cpt=label)

        record = EpochRecord(epoch, float(before.mean() / T), float(after.mean() / T),
                             stats.skipped, after / T)
        log.info("epoch %d: mean local loglik %.4f -> %.4f (%d skipped)",
                 epoch, record.loglik_before, record.loglik_after, record.skipped)
        report.epochs.append(record)
    return model, report
