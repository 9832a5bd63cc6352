"""Perceptron variants with multiplicative input interactions.

These are the building blocks that motivate feeding polynomial features
to a network: a plain perceptron, its extension with weighted products
of input pairs/triples, the squared-inputs special case, and a unit
whose monomial exponents are themselves learned.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np

from .tensor import (Tensor, _t, absolute, exp, gather_rows, log, matmul,
                     mul, reduce_sum, sigmoid)

LEARNABLE_ORDER_EPS = 1e-7


def perceptron_unit(eta, w) -> Tensor:
    """First-order unit sigma(sum_j w_j eta_j)."""
    eta, w = _t(eta), _t(w)
    if eta.data.shape != w.data.shape:
        raise ValueError("perceptron_unit needs matching eta and weight shapes")
    return sigmoid(reduce_sum(mul(w, eta)))


def pair_index_count(dim: int) -> int:
    return dim * (dim + 1) // 2


def triple_index_count(dim: int) -> int:
    return dim * (dim + 1) * (dim + 2) // 6


def high_order_unit(eta, order: int, w1, w2, w3=None) -> Tensor:
    """Unit with weighted sums of input products up to `order` in {2, 3}.

    w2 (and w3) hold one weight per unordered index pair (triple), i.e.
    the upper part of the symmetric interaction tensor: w2 has
    d(d+1)/2 entries ordered by (i, j) with i <= j, w3 has
    d(d+1)(d+2)/6 entries ordered by (i, j, k) with i <= j <= k.
    """
    if order not in (2, 3):
        raise ValueError("high_order_unit order must be 2 or 3")
    eta, w1, w2 = _t(eta), _t(w1), _t(w2)
    d = eta.data.shape[0]
    if eta.data.ndim != 1 or w1.data.shape != (d,):
        raise ValueError("high_order_unit needs 1-D eta and matching w1")
    if w2.data.shape != (pair_index_count(d),):
        raise ValueError(f"w2 must have {pair_index_count(d)} entries")
    ii, jj = np.triu_indices(d)
    acc = reduce_sum(mul(w1, eta))
    pair_products = mul(gather_rows(eta, ii), gather_rows(eta, jj))
    acc = acc + reduce_sum(mul(w2, pair_products))
    if order == 3:
        if w3 is None:
            raise ValueError("order 3 requires w3")
        w3 = _t(w3)
        if w3.data.shape != (triple_index_count(d),):
            raise ValueError(f"w3 must have {triple_index_count(d)} entries")
        triples = np.array(list(combinations_with_replacement(range(d), 3)), dtype=np.int64)
        prod = mul(mul(gather_rows(eta, triples[:, 0]), gather_rows(eta, triples[:, 1])),
                   gather_rows(eta, triples[:, 2]))
        acc = acc + reduce_sum(mul(w3, prod))
    elif w3 is not None:
        raise ValueError("w3 given but order is 2")
    return sigmoid(acc)


def square_unit(eta, w1, w2) -> Tensor:
    """sigma(sum_i w1_i eta_i + sum_j w2_j eta_j^2)."""
    eta, w1, w2 = _t(eta), _t(w1), _t(w2)
    if not eta.data.shape == w1.data.shape == w2.data.shape:
        raise ValueError("square_unit needs matching shapes")
    return sigmoid(reduce_sum(mul(w1, eta)) + reduce_sum(mul(w2, mul(eta, eta))))


def learnable_order_unit(x, w, eps: float = LEARNABLE_ORDER_EPS) -> Tensor:
    """exp(log(|x| + eps) @ w): products of learned powers of |x|.

    With w the identity the unit recovers |x| up to eps; integer columns
    of w produce the corresponding monomials of |x|. Differentiable in
    both x and w; eps > 0 keeps the log finite at zero.
    """
    if eps <= 0.0:
        raise ValueError("eps must be > 0")
    x, w = _t(x), _t(w)
    if w.data.ndim != 2 or x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(f"kernel shape {w.data.shape} does not match input {x.data.shape}")
    return exp(matmul(log(absolute(x) + eps), w))
