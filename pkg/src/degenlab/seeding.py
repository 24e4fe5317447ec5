"""Deterministic seed derivation.

Every stochastic task draws from its own generator seeded by mixing the
master seed with a task index or a stable label hash, so results never depend
on scheduling or worker count.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(a, b):
    return splitmix64(splitmix64(int(a) & MASK64) ^ (int(b) & MASK64))


def label_hash(label):
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


def derive_seed(master, label):
    return mix64(master, label_hash(label))


def rng_for(master, index):
    return np.random.default_rng(mix64(master, index))
