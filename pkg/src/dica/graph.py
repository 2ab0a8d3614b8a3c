"""The discrete ICA factor graph and its inference modes.

Topology: M independent sources ``S_i`` feed fixed marginalizer blocks into
a diverter over the product space ``S = S_1 x ... x S_M``.  Each visible
variable ``X_j`` hangs off the diverter through a learned table
``P(X_j | S)``, and an optional label variable ``C`` is attached the same way.

Branches of the diverter are ordered ``[sources..., visibles..., label]``.
Product-space indices are mixed-radix with the first source most significant.
"""
from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np

from . import messages as msg
from .errors import CapacityError, ContradictoryEvidence, DimensionError, MissingLabelBlock

MAX_PRODUCT_SIZE = 2 ** 20


def product_index(coords, source_sizes):
    """Mixed-radix index of a source configuration in the product space."""
    if len(coords) != len(source_sizes):
        raise DimensionError(f"got {len(coords)} coordinates for {len(source_sizes)} sources")
    index = 0
    for c, n in zip(coords, source_sizes):
        if not 0 <= c < n:
            raise DimensionError(f"coordinate {c} outside alphabet of size {n}")
        index = index * n + int(c)
    return index


def product_coords(index, source_sizes):
    """Inverse of :func:`product_index`."""
    return tuple(int(c) for c in np.unravel_index(index, tuple(source_sizes)))


def marginalizer(i, source_sizes):
    """Fixed table mapping source ``i`` into the product space.

    Row ``k`` is uniform over the product indices whose ``i``-th coordinate
    is ``k``: ``(|S_i|/|S|) 1^T (x) ... (x) I_{|S_i|} (x) ... (x) 1^T``.
    """
    sizes = [int(n) for n in source_sizes]
    if not 0 <= i < len(sizes):
        raise DimensionError(f"source index {i} out of range for {len(sizes)} sources")
    if any(n < 1 for n in sizes):
        raise DimensionError("alphabet sizes must be positive")
    factors = [np.eye(n) if t == i else np.ones((1, n)) for t, n in enumerate(sizes)]
    total = int(np.prod(sizes))
    return reduce(np.kron, factors) * (sizes[i] / total)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DicaModel:
    """Parameters of a DICA graph.

    ``priors[i]`` is the prior over source ``i``; ``visible_cpts[j]`` has shape
    ``(product_size, visible_sizes[j])``; ``label_cpt`` is optional with shape
    ``(product_size, label_size)``.  Marginalizers are derived from the sizes.
    Instances are immutable; use :func:`dataclasses.replace` to change
    parameters.
    """

    source_sizes: tuple
    visible_sizes: tuple
    priors: tuple
    visible_cpts: tuple
    label_cpt: np.ndarray = None
    marginalizers: tuple = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.source_sizes)
        vsizes = tuple(int(n) for n in self.visible_sizes)
        if not sizes or not vsizes:
            raise DimensionError("need at least one source and one visible variable")
        if any(n < 1 for n in sizes + vsizes):
            raise DimensionError("alphabet sizes must be positive")
        S = int(np.prod(sizes, dtype=object))
        if S > MAX_PRODUCT_SIZE:
            raise CapacityError(f"product space of size {S} exceeds {MAX_PRODUCT_SIZE}")
        if len(self.priors) != len(sizes):
            raise DimensionError(f"expected {len(sizes)} priors, got {len(self.priors)}")
        if len(self.visible_cpts) != len(vsizes):
            raise DimensionError(f"expected {len(vsizes)} visible cpts, got {len(self.visible_cpts)}")
        priors = []
        for n, p in zip(sizes, self.priors):
            p = msg.as_message(p)
            if p.shape != (n,):
                raise DimensionError(f"prior of length {p.size} for alphabet of size {n}")
            priors.append(_frozen(p))
        cpts = []
        for n, P in zip(vsizes, self.visible_cpts):
            P = msg.as_cpt(P)
            if P.shape != (S, n):
                raise DimensionError(f"visible cpt has shape {P.shape}, expected {(S, n)}")
            cpts.append(_frozen(P))
        label = self.label_cpt
        if label is not None:
            label = msg.as_cpt(label)
            if label.shape[0] != S:
                raise DimensionError(f"label cpt has {label.shape[0]} rows, expected {S}")
            label = _frozen(label)
        set_ = object.__setattr__
        set_(self, "source_sizes", sizes)
        set_(self, "visible_sizes", vsizes)
        set_(self, "priors", tuple(priors))
        set_(self, "visible_cpts", tuple(cpts))
        set_(self, "label_cpt", label)
        set_(self, "marginalizers", tuple(_frozen(marginalizer(i, sizes)) for i in range(len(sizes))))

    @property
    def M(self):
        return len(self.source_sizes)

    @property
    def N(self):
        return len(self.visible_sizes)

    @property
    def product_size(self):
        return int(np.prod(self.source_sizes))

    @property
    def has_label(self):
        return self.label_cpt is not None

    @property
    def label_size(self):
        return None if self.label_cpt is None else self.label_cpt.shape[1]

    @cached_property
    def visible_stack(self):
        """Visible cpts stacked into ``(N, |S|, max |X_j|)``, zero padded."""
        L = max(self.visible_sizes)
        stack = np.zeros((self.N, self.product_size, L))
        for j, P in enumerate(self.visible_cpts):
            stack[j, :, : P.shape[1]] = P
        stack.flags.writeable = False
        return stack


def build(M, source_sizes, N, visible_sizes, with_label=False, label_size=10, seed=0,
          prior_perturbation=0.01, cpt_spread=0.2):
    """Create a randomly initialized model.

    Priors are uniform plus a seeded perturbation of at most
    ``prior_perturbation`` per entry.  Each learnable table row is drawn with
    entries in ``(1 - cpt_spread, 1]`` and normalized, so every entry is
    strictly positive; ``cpt_spread=1`` gives fully random rows and smaller
    values start closer to uniform.
    """
    source_sizes = [int(n) for n in source_sizes]
    visible_sizes = [int(n) for n in visible_sizes]
    if M < 1 or N < 1:
        raise DimensionError("need M >= 1 and N >= 1")
    if len(source_sizes) != M or len(visible_sizes) != N:
        raise DimensionError("size lists do not match M and N")
    if not 0 < cpt_spread <= 1:
        raise ValueError("cpt_spread must lie in (0, 1]")
    S = int(np.prod(source_sizes, dtype=object))
    if S > MAX_PRODUCT_SIZE:
        raise CapacityError(f"product space of size {S} exceeds {MAX_PRODUCT_SIZE}")
    rng = np.random.default_rng(seed)

    priors = []
    for n in source_sizes:
        eps = min(prior_perturbation, 0.5 / n)
        priors.append(msg.normalize(1.0 / n + eps * rng.uniform(-1.0, 1.0, n)))

    def random_cpt(L):
        P = 1.0 - cpt_spread * rng.random((S, L))
        return P / P.sum(axis=1, keepdims=True)

    cpts = [random_cpt(L) for L in visible_sizes]
    label = random_cpt(label_size) if with_label else None
    return DicaModel(tuple(source_sizes), tuple(visible_sizes), tuple(priors), tuple(cpts), label)


class Evidence:
    """Backward evidence at the visible variables (and optionally the label).

    Each visible entry is a hard observation (an int symbol), a soft
    observation (a likelihood vector, normalized on use) or ``None`` when the
    variable is unobserved.  An integer array is accepted as all-hard
    evidence; use -1 in :meth:`partial` for erasures.
    """

    def __init__(self, visible, label=None):
        if isinstance(visible, np.ndarray) and visible.dtype.kind in "iub":
            symbols = visible.astype(np.int64).ravel()
            if np.any(symbols < 0):
                raise DimensionError("negative symbols are not valid hard evidence")
            self.symbols = symbols
            self.soft = {}
        else:
            symbols = np.full(len(visible), -1, dtype=np.int64)
            soft = {}
            for j, v in enumerate(visible):
                if v is None:
                    continue
                if isinstance(v, (int, np.integer)):
                    if v < 0:
                        raise DimensionError(f"negative symbol at variable {j}")
                    symbols[j] = v
                else:
                    soft[j] = msg.normalize(v)
            self.symbols = symbols
            self.soft = soft
        if label is not None and not isinstance(label, (int, np.integer)):
            label = msg.normalize(label)
        self.label = label

    @classmethod
    def hard(cls, symbols, label=None):
        return cls(np.asarray(symbols, dtype=np.int64), label)

    @classmethod
    def partial(cls, symbols, observed=None, label=None):
        """Hard evidence where ``observed`` is False (or the symbol is -1)."""
        symbols = np.asarray(symbols, dtype=np.int64).ravel().copy()
        if observed is not None:
            symbols[~np.asarray(observed, dtype=bool).ravel()] = -1
        ev = cls.__new__(cls)
        ev.symbols = symbols
        ev.soft = {}
        ev.label = label if label is None or isinstance(label, (int, np.integer)) else msg.normalize(label)
        return ev

    @classmethod
    def empty(cls, n, label=None):
        return cls.partial(np.full(n, -1), label=label)

    def __len__(self):
        return len(self.symbols)

    @property
    def observed(self):
        """Boolean mask of variables carrying hard or soft evidence."""
        mask = self.symbols >= 0
        for j in self.soft:
            mask[j] = True
        return mask

    @property
    def is_complete(self):
        return bool(np.all(self.observed))

    def backward_matrix(self, model):
        """Backward messages at the visible variables, shape ``(N, max |X_j|)``."""
        if len(self) != model.N:
            raise DimensionError(f"evidence covers {len(self)} variables, model has {model.N}")
        sizes = np.asarray(model.visible_sizes)
        L = sizes.max()
        out = np.zeros((model.N, L))
        hard = self.symbols >= 0
        if np.any(self.symbols[hard] >= sizes[hard]):
            raise DimensionError("hard evidence symbol outside its alphabet")
        rows = np.flatnonzero(hard)
        out[rows, self.symbols[hard]] = 1.0
        absent = ~hard
        for j, v in self.soft.items():
            if v.shape != (sizes[j],):
                raise DimensionError(f"soft evidence at variable {j} has length {v.size}, expected {sizes[j]}")
            out[j, : sizes[j]] = v
            absent[j] = False
        for j in np.flatnonzero(absent):
            out[j, : sizes[j]] = 1.0 / sizes[j]
        return out

    def label_backward(self, model):
        if self.label is None:
            return msg.uniform(model.label_size) if model.has_label else None
        if not model.has_label:
            raise MissingLabelBlock("label evidence given but the model has no label block")
        if isinstance(self.label, (int, np.integer)):
            return msg.delta(model.label_size, int(self.label))
        if self.label.shape != (model.label_size,):
            raise DimensionError("soft label evidence has the wrong length")
        return self.label


def drop_impossible(model, evidence):
    """Treat hard observations that no product state can emit as unobserved.

    Learned tables can contain exact zeros (a pixel never seen "on" during
    training), and a single such observation makes the whole input
    contradictory.  Returns the relaxed evidence and the boolean mask of
    dropped variables.
    """
    symbols = evidence.symbols
    hard = np.flatnonzero(symbols >= 0)
    dropped = np.zeros(len(symbols), dtype=bool)
    for j in hard:
        if not np.any(model.visible_cpts[j][:, symbols[j]] > 0):
            dropped[j] = True
    if not dropped.any():
        return evidence, dropped
    relaxed = Evidence.partial(np.where(dropped, -1, symbols), label=evidence.label)
    relaxed.soft = dict(evidence.soft)
    return relaxed, dropped


@dataclass(frozen=True, eq=False)
class MessageState:
    """Forward and backward messages on every branch after propagation.

    ``diverter_in[t]`` is the message flowing into the diverter from branch
    ``t`` and ``diverter_out[t]`` the message the diverter sends back.  For a
    source branch these are the forward and backward messages at the
    marginalizer output; for a visible branch they are the backward and
    forward messages at the input of its table.
    """

    source_forward: list
    source_backward: list
    diverter_in: np.ndarray
    diverter_out: np.ndarray
    visible_forward: list
    visible_backward: list
    label_forward: np.ndarray = None
    label_backward: np.ndarray = None

    def source_posteriors(self):
        return [msg.posterior(f, b) for f, b in zip(self.source_forward, self.source_backward)]

    def visible_posteriors(self):
        return [msg.posterior(f, b) for f, b in zip(self.visible_forward, self.visible_backward)]

    def label_posterior(self):
        if self.label_forward is None:
            raise MissingLabelBlock("model has no label block")
        return msg.posterior(self.label_forward, self.label_backward)


def exclusive_products(inward):
    """For each row ``t``, the normalized product of all other rows.

    Computed with prefix and suffix sums of logs, so no division is involved
    and hundreds of branches do not underflow.
    """
    with np.errstate(divide="ignore"):
        logs = np.log(inward)
    prefix = np.zeros_like(logs)
    np.cumsum(logs[:-1], axis=0, out=prefix[1:])
    suffix = np.zeros_like(logs)
    suffix[:-1] = np.cumsum(logs[:0:-1], axis=0)[::-1]
    total = prefix + suffix
    top = total.max(axis=1, keepdims=True)
    if np.any(np.isneginf(top)):
        raise ContradictoryEvidence("diverter product vanishes on some branch")
    out = np.exp(total - top)
    return out / out.sum(axis=1, keepdims=True)


def _normalize_rows(a):
    s = a.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise ContradictoryEvidence("message through a block vanishes")
    return a / s


def propagate(model, evidence=None, source_forwards=None):
    """Run the inward, diverter and outward sweep; exact on this tree."""
    M, N = model.M, model.N
    if evidence is None:
        evidence = Evidence.empty(N)
    if source_forwards is None:
        f_src = list(model.priors)
    else:
        if len(source_forwards) != M:
            raise DimensionError(f"expected {M} source messages, got {len(source_forwards)}")
        f_src = []
        for n, f in zip(model.source_sizes, source_forwards):
            f = msg.normalize(f)
            if f.shape != (n,):
                raise DimensionError(f"source message of length {f.size} for alphabet of size {n}")
            f_src.append(f)

    b_vis = evidence.backward_matrix(model)
    b_label = evidence.label_backward(model)
    stack = model.visible_stack

    inward = np.empty((M + N + model.has_label, model.product_size))
    for i, (P, f) in enumerate(zip(model.marginalizers, f_src)):
        inward[i] = msg.forward_through(P, f)
    inward[M:M + N] = _normalize_rows(np.einsum("nsl,nl->ns", stack, b_vis))
    if model.has_label:
        inward[-1] = msg.backward_through(model.label_cpt, b_label)

    outward = exclusive_products(inward)

    f_vis = _normalize_rows(np.einsum("ns,nsl->nl", outward[M:M + N], stack))
    sizes = model.visible_sizes
    b_src = [msg.backward_through(P, outward[i]) for i, P in enumerate(model.marginalizers)]
    label_forward = msg.forward_through(model.label_cpt, outward[-1]) if model.has_label else None
    return MessageState(
        source_forward=f_src,
        source_backward=b_src,
        diverter_in=inward,
        diverter_out=outward,
        visible_forward=[f_vis[j, :n] for j, n in enumerate(sizes)],
        visible_backward=[b_vis[j, :n] for j, n in enumerate(sizes)],
        label_forward=label_forward,
        label_backward=b_label,
    )


def _source_messages(model, config):
    if len(config) != model.M:
        raise DimensionError(f"expected {model.M} source values, got {len(config)}")
    out = []
    for n, c in zip(model.source_sizes, config):
        out.append(msg.delta(n, int(c)) if isinstance(c, (int, np.integer)) else c)
    return out


def generate(model, source_config):
    """Forward messages at the visible variables for given source values.

    Entries of ``source_config`` are symbols (injected as deltas) or
    probability vectors for soft decoding.
    """
    return propagate(model, None, _source_messages(model, source_config)).visible_forward


def encode(model, evidence):
    """Source posteriors (the soft factorial code) of a fully observed input."""
    if not evidence.is_complete:
        raise ValueError("encode needs evidence on every visible variable")
    return propagate(model, evidence).source_posteriors()


@dataclass(frozen=True, eq=False)
class Completion:
    """Result of pattern completion.

    ``estimate[j]`` echoes the evidence for observed variables and is the
    forward message for missing ones.  ``forward`` and ``posterior`` are
    given for every variable.
    """

    estimate: list
    forward: list
    posterior: list
    observed: np.ndarray
    sources: list


def complete(model, evidence):
    observed = evidence.observed
    if not observed.any():
        raise ValueError("pattern completion needs at least one observed variable")
    state = propagate(model, evidence)
    estimate = [b if o else f for f, b, o in zip(state.visible_forward, state.visible_backward, observed)]
    return Completion(estimate, state.visible_forward, state.visible_posteriors(), observed,
                      state.source_posteriors())


def correct(model, evidence):
    """Forward messages at every visible variable, without the backward product."""
    if not evidence.is_complete:
        raise ValueError("error correction needs evidence on every visible variable")
    return propagate(model, evidence).visible_forward


def classify(model, evidence):
    """Return ``(class posterior, source posteriors)`` for an input."""
    if not model.has_label:
        raise MissingLabelBlock("model has no label block")
    state = propagate(model, evidence)
    return state.label_posterior(), state.source_posteriors()


def prototype(model, c):
    """Visible forwards and source posteriors induced by a label delta."""
    if not model.has_label:
        raise MissingLabelBlock("model has no label block")
    if not 0 <= c < model.label_size:
        raise DimensionError(f"class {c} outside label alphabet of size {model.label_size}")
    state = propagate(model, Evidence.empty(model.N, label=int(c)))
    return state.visible_forward, state.source_posteriors()


def mean_image(msgs):
    """Probability of symbol 1 for each binary message."""
    out = np.empty(len(msgs))
    for j, m in enumerate(msgs):
        if len(m) != 2:
            raise DimensionError(f"message {j} is over {len(m)} symbols, expected 2")
        out[j] = m[1]
    return out
