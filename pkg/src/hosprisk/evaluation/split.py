"""Stratified hold-out and k-fold partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _random


class DegenerateClass(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    test_fraction: float = 0.2


def _class_members(labels):
    y = np.asarray(labels).astype(bool)
    return [np.flatnonzero(~y), np.flatnonzero(y)]


def largest_remainder(sizes, fraction):
    """Integer shares of ``round(sum(sizes) * fraction)`` split across classes
    in proportion to ``sizes``; leftover units go to the largest remainders
    (ties to the earlier class)."""
    total = math.floor(sum(sizes) * fraction + 0.5)
    quotas = [n * fraction for n in sizes]
    shares = [math.floor(q) for q in quotas]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - shares[i]), i))
    for i in order[: total - sum(shares)]:
        shares[i] += 1
    return shares


def stratified_split(labels, test_fraction=0.2, seed=0):
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    members = _class_members(labels)
    for cls, idx in enumerate(members):
        if idx.size < 2:
            raise DegenerateClass(f"class {bool(cls)} has {idx.size} member(s); need at least 2")
    shares = largest_remainder([m.size for m in members], test_fraction)
    test, train = [], []
    for cls, (idx, n_test) in enumerate(zip(members, shares)):
        perm = _random.derive_rng(seed, cls).permutation(idx)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    test = np.sort(np.concatenate(test))
    train = np.sort(np.concatenate(train))
    if test.size == 0 or train.size == 0:
        raise ValueError("split leaves an empty train or test set")
    return SplitPlan(train, test, seed, test_fraction)


def stratified_kfold(labels, k=5, seed=0):
    """``k`` disjoint, sorted index arrays covering every row.

    Each class is shuffled, then the classes are dealt round-robin in one
    continuous sequence, so per-class and total fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    members = _class_members(labels)
    for cls, idx in enumerate(members):
        if idx.size < k:
            raise DegenerateClass(f"class {bool(cls)} has {idx.size} member(s); need at least k={k}")
    dealt = np.concatenate([_random.derive_rng(seed, cls).permutation(idx) for cls, idx in enumerate(members)])
    slot = np.arange(dealt.size) % k
    return [np.sort(dealt[slot == f]) for f in range(k)]
