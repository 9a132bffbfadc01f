"""Ternary feature codes, split codes, and the arithmetized comparison.

Features take values in {-1, 0, +1} and are one-hot coded as bits
(x2, x1, x0); node thresholds take values in {-0.5, +0.5} and are coded as
a single bit y (1 for -0.5).  A node test "feature < threshold" then
reduces to the two-variable arithmetic form

    z = (1 - x0) * (x2 * (y - 1) - y) + 1

which needs neither x1 nor any comparison circuit: on the encrypted side it
costs one ciphertext-ciphertext product when the split code is public and
two when the split code is itself encrypted.  Smaller-than routes to the
left child.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelFormatError

THRESHOLD_LOW = -0.5
THRESHOLD_HIGH = 0.5


@dataclass(frozen=True)
class FeatureCode:
    """One-hot code of a ternary feature: exactly one of x2, x1, x0 is set."""

    x2: int
    x1: int
    x0: int

    def __post_init__(self):
        bits = (self.x2, self.x1, self.x0)
        if any(b not in (0, 1) for b in bits) or sum(bits) != 1:
            raise ModelFormatError(f"feature code must be one-hot, got {bits}")


def normalize_copy_number(raw: int) -> int:
    """Collapse a 5-level copy-number state in {-2..2} to ternary.

    Deletions (-2, -1) map to -1, amplifications (1, 2) to +1, neither to 0.
    """
    if raw in (-2, -1):
        return -1
    if raw == 0:
        return 0
    if raw in (1, 2):
        return 1
    raise ModelFormatError(f"copy-number state must lie in -2..2, got {raw}")


def encode_feature(value: int) -> FeatureCode:
    """One-hot code of a ternary feature value."""
    if value == -1:
        return FeatureCode(0, 0, 1)
    if value == 0:
        return FeatureCode(0, 1, 0)
    if value == 1:
        return FeatureCode(1, 0, 0)
    raise ModelFormatError(f"feature value must be ternary, got {value}")


def encode_split(threshold: float) -> int:
    """Split code y: -0.5 -> 1, +0.5 -> 0.  Other thresholds are inadmissible."""
    if threshold == THRESHOLD_LOW:
        return 1
    if threshold == THRESHOLD_HIGH:
        return 0
    raise ModelFormatError(
        f"split threshold must be -0.5 or +0.5 after normalization, got {threshold}"
    )


def compare_clear(code: FeatureCode, y: int) -> int:
    """The arithmetic comparison: 1 iff the coded feature is below the coded split."""
    return (1 - code.x0) * (code.x2 * (y - 1) - y) + 1


def compare_boolean(code: FeatureCode, y: int) -> int:
    """Boolean form of the same test: not x2 and (not y or x0)."""
    return int((not code.x2) and ((not y) or code.x0))


def _ones(backend):
    return backend.encode(np.ones(backend.params.slot_count, dtype=np.int64))


def compare_encrypted(backend, ct_x0, ct_x2, y_plain, ek):
    """Slot-wise comparison with public split codes.

    Slot i of ct_x0 / ct_x2 carries the x0 / x2 bit of the feature routed to
    node-slot i, and slot i of y_plain that node's split code.  The returned
    ciphertext decrypts to the comparison bit per slot and consumes exactly
    one ciphertext-ciphertext multiplication.
    """
    ones = _ones(backend)
    y_slots = backend.decode(y_plain).astype(np.int64)
    y_minus_1 = backend.encode(y_slots - 1)
    inner = backend.sub_pt(backend.mul_pt(ct_x2, y_minus_1), y_plain)
    one_minus_x0 = backend.add_pt(backend.negate(ct_x0), ones)
    return backend.add_pt(backend.mul_ct(one_minus_x0, inner, ek), ones)


def compare_encrypted_model(backend, ct_x0, ct_x2, ct_y, ek):
    """Slot-wise comparison with encrypted split codes (two ct-ct products).

    Parenthesized as (1 - x0) * (x2 * (y - 1) - y) + 1 with x2 * (y - 1)
    evaluated first, keeping total depth at two from fresh inputs.
    """
    ones = _ones(backend)
    inner = backend.mul_ct(ct_x2, backend.sub_pt(ct_y, ones), ek)
    inner = backend.sub_ct(inner, ct_y)
    one_minus_x0 = backend.add_pt(backend.negate(ct_x0), ones)
    return backend.add_pt(backend.mul_ct(one_minus_x0, inner, ek), ones)
