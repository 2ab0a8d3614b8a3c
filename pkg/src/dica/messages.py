"""Message algebra for factor graphs in reduced normal form.

Messages are 1-D float64 arrays holding normalized probability vectors.
Conditional probability tables (Cpts) are 2-D arrays whose row ``k`` is the
distribution ``P(out | in = k)``. All functions here are pure and return
fresh arrays.
"""
import numpy as np

from .errors import ContradictoryEvidence, DimensionError

#: Tolerance used when checking that a vector or table row sums to one.
ATOL = 1e-9


def as_message(v):
    """Convert ``v`` to a float64 vector, validating it is a probability vector."""
    m = np.asarray(v, dtype=np.float64)
    if m.ndim != 1 or m.size < 1:
        raise DimensionError(f"message must be a non-empty vector, got shape {m.shape}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValueError("message entries must be finite and non-negative")
    if abs(m.sum() - 1.0) > ATOL:
        raise ValueError(f"message sums to {m.sum()!r}, not 1")
    return m


def as_cpt(p):
    """Convert ``p`` to a float64 table, validating row-stochasticity."""
    P = np.asarray(p, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 1 or P.shape[1] < 1:
        raise DimensionError(f"cpt must be a non-empty matrix, got shape {P.shape}")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ValueError("cpt entries must be finite and non-negative")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > ATOL):
        raise ValueError("cpt rows must sum to 1")
    return P


def uniform(n):
    return np.full(n, 1.0 / n)


def delta(n, k):
    if not 0 <= k < n:
        raise DimensionError(f"symbol {k} outside alphabet of size {n}")
    m = np.zeros(n)
    m[k] = 1.0
    return m


def normalize(v):
    """Scale a non-negative vector to unit sum.

    Raises ContradictoryEvidence if ``v`` is identically zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimensionError(f"expected a non-empty vector, got shape {v.shape}")
    if np.any(v < 0):
        raise ValueError("cannot normalize a vector with negative entries")
    s = v.sum()
    if not s > 0:
        raise ContradictoryEvidence("cannot normalize an all-zero vector")
    return v / s


def forward_through(cpt, f_in):
    """Sum rule in the direction of the block: ``P^T f_in``."""
    P = np.asarray(cpt, dtype=np.float64)
    f = np.asarray(f_in, dtype=np.float64)
    if P.ndim != 2 or f.shape != (P.shape[0],):
        raise DimensionError(f"forward message of shape {f.shape} does not fit cpt {P.shape}")
    return normalize(f @ P)


def backward_through(cpt, b_out):
    """Sum rule against the block direction: ``P b_out``, normalized."""
    P = np.asarray(cpt, dtype=np.float64)
    b = np.asarray(b_out, dtype=np.float64)
    if P.ndim != 2 or b.shape != (P.shape[1],):
        raise DimensionError(f"backward message of shape {b.shape} does not fit cpt {P.shape}")
    return normalize(P @ b)


def combine(msgs):
    """Product rule: normalized elementwise product of equal-length messages.

    The running product is renormalized after every factor so long lists do
    not underflow; the result is the same as normalizing once at the end.
    """
    msgs = [np.asarray(m, dtype=np.float64) for m in msgs]
    if not msgs:
        raise ValueError("combine needs at least one message")
    n = msgs[0].shape
    if any(m.ndim != 1 or m.shape != n for m in msgs):
        raise DimensionError("messages to combine must be vectors of equal length")
    acc = normalize(msgs[0])
    for m in msgs[1:]:
        acc = normalize(acc * m)
    return acc


def posterior(f, b):
    """Branch posterior ``f * b / sum(f * b)``."""
    return combine([f, b])
