"""
Context encoder building blocks over autodiff nodes.

All functions take the unpadded input embedding X (n x m) of one context, so
pooling and attention never see padded positions.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from app.services.autodiff.optim import dropout
from app.services.autodiff.tensor import (
    Node,
    ShapeError,
    add,
    concat,
    constant,
    getitem,
    matmul,
    max_reduce,
    mean,
    mul,
    sigmoid,
    softmax,
    stack,
    tanh,
    transpose,
)

logger = logging.getLogger(__name__)


def convolve(X: Node, filters: Node, window: int) -> Node:
    """
    c[j, i] = filters[i] . concat(x[j-l+1], ..., x[j]); the l-1 positions
    before the sequence start are zero rows, so the output keeps n rows.
    """
    n, m = X.shape
    if n < 1:
        raise ShapeError("convolve needs at least one position")
    if filters.shape[1] != window * m:
        raise ShapeError(
            f"filters of shape {filters.shape} do not match window {window} over {m}-dim terms"
        )
    padded = concat([constant(np.zeros((window - 1, m))), X], axis=0) if window > 1 else X
    windows = concat([getitem(padded, slice(k, k + n)) for k in range(window)], axis=1)
    return matmul(windows, transpose(filters))


def max_pool(C: Node) -> Node:
    return max_reduce(C, axis=0)


def piecewise_max_pool(C: Node, subj_pos: int, obj_pos: int) -> Node:
    """
    Column maxima over the left [0, a], inner (a, b] and right (b, n) segments,
    where a < b are the participant positions; an empty segment yields zeros.
    """
    n, t = C.shape
    if subj_pos == obj_pos or not (0 <= subj_pos < n and 0 <= obj_pos < n):
        raise ShapeError(f"Invalid participant positions ({subj_pos}, {obj_pos}) for {n} rows")
    a, b = min(subj_pos, obj_pos), max(subj_pos, obj_pos)
    pieces = []
    for start, stop in ((0, a + 1), (a + 1, b + 1), (b + 1, n)):
        if stop > start:
            pieces.append(max_reduce(getitem(C, slice(start, stop)), axis=0))
        else:
            pieces.append(constant(np.zeros(t)))
    return concat(pieces, axis=0)


def feature_attention(
    X: Node,
    feature: Node,
    W_we: Node,
    b_we: Node,
    W_a: Node,
    b_a: Node,
) -> Tuple[Node, Node]:
    """
    u_i = W_a . tanh(W_we . [x_i, f] + b_we) + b_a, alpha = softmax(u),
    s = sum_i alpha_i x_i. Returns (s, alpha).
    """
    n, m = X.shape
    if feature.shape != (m,):
        raise ShapeError(f"feature of shape {feature.shape} does not match term dimension {m}")
    # W_we . [x_i, f] == W_x . x_i + W_f . f with W_we = [W_x | W_f]
    W_x = getitem(W_we, (slice(None), slice(0, m)))
    W_f = getitem(W_we, (slice(None), slice(m, 2 * m)))
    shared = add(matmul(W_f, feature), b_we)
    hidden = tanh(add(matmul(X, transpose(W_x)), shared))
    scores = add(matmul(hidden, W_a), b_a)
    alpha = softmax(scores)
    return matmul(alpha, X), alpha


def lstm(X: Node, W_x: Node, W_h: Node, b: Node, reverse: bool = False) -> List[Node]:
    """
    Standard LSTM with input, forget and output gates (gate order i, f, o, g).
    Returns hidden states aligned with the input positions.
    """
    n, _ = X.shape
    hidden = W_h.shape[1]
    inputs = add(matmul(X, transpose(W_x)), b)
    h = constant(np.zeros(hidden))
    c = constant(np.zeros(hidden))
    states: List[Optional[Node]] = [None] * n
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        z = add(getitem(inputs, t), matmul(W_h, h))
        i = sigmoid(getitem(z, slice(0, hidden)))
        f = sigmoid(getitem(z, slice(hidden, 2 * hidden)))
        o = sigmoid(getitem(z, slice(2 * hidden, 3 * hidden)))
        g = tanh(getitem(z, slice(3 * hidden, 4 * hidden)))
        c = add(mul(f, c), mul(i, g))
        h = mul(o, tanh(c))
        states[t] = h
    return states


def bilstm(X: Node, forward: Tuple[Node, Node, Node], backward: Tuple[Node, Node, Node], merge: str = "concat") -> Node:
    """H with one row per position: forward and backward states concatenated (2h) or summed (h)."""
    fwd = lstm(X, *forward)
    bwd = lstm(X, *backward, reverse=True)
    if merge == "concat":
        rows = [concat([f, b], axis=0) for f, b in zip(fwd, bwd)]
    elif merge == "sum":
        rows = [add(f, b) for f, b in zip(fwd, bwd)]
    else:
        raise ValueError(f"Unknown bi-directional merge '{merge}'")
    return stack(rows, axis=0)


def self_attention(H: Node, w: Node) -> Tuple[Node, Node]:
    """u_i = tanh(h_i) . w, alpha = softmax(u), s = tanh(H^T alpha)."""
    if w.shape != (H.shape[1],):
        raise ShapeError(f"attention target of shape {w.shape} does not match states {H.shape}")
    alpha = softmax(matmul(tanh(H), w))
    return tanh(matmul(alpha, H)), alpha


def average(nodes: List[Node]) -> Node:
    return mean(stack(nodes, axis=0), axis=0)


def classify(
    s: Node,
    W_r: Node,
    b_r: Node,
    keep_prob: float = 1.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Node:
    """o = softmax(W_r . dropout(tanh(s)) + b_r)."""
    if W_r.shape[1] != s.shape[0]:
        raise ShapeError(f"W_r of shape {W_r.shape} does not match context vector {s.shape}")
    activated = dropout(tanh(s), keep_prob, training, rng)
    return softmax(add(matmul(W_r, activated), b_r))
