"""Scheme parameters and circuit-sized presets.

Three presets cover the shipped circuits, named by the deepest
ciphertext-ciphertext multiplication chain they must absorb:

* ``svm-d1``          - packed dot products (one plaintext multiply, a
                        row-wide rotate-and-add); depth budget 1.
* ``xgb-d2``          - comparison gadget plus tree scoring with plaintext
                        split codes and leaves; depth budget 2.
* ``xgb-encmodel-d3`` - same circuit with encrypted split codes; depth
                        budget 3.

Coefficient-modulus prime counts were fixed empirically: the acceptance
suite measures the remaining noise margin on each preset's deepest circuit
and requires at least 10 bits.  The presets target correctness and that
margin, not a particular concrete-security level; deployments wanting a
security claim should re-derive ring degree and modulus sizes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from math import prod

from .errors import ParamError
from .ntt import find_ntt_primes, is_prime

PRESET_NAMES = ("svm-d1", "xgb-d2", "xgb-encmodel-d3")

# (ring degree, number of 29-bit coefficient primes, depth budget)
_PRESET_SHAPES = {
    "svm-d1": (4096, 5, 1),
    "xgb-d2": (2048, 10, 2),
    "xgb-encmodel-d3": (2048, 11, 3),
}

_COEFF_PRIME_BITS = 29
_PLAINTEXT_BITS = 41  # default t is the largest 41-bit prime = 1 mod 2N, ~2^40 range


@dataclass(frozen=True)
class HeParams:
    """Ring, modulus, and depth description of one scheme instance."""

    ring_degree: int
    coeff_modulus: tuple[int, ...]
    plaintext_modulus: int
    depth_budget: int
    preset_name: str = "custom"

    def __post_init__(self):
        n = self.ring_degree
        if n < 4 or n & (n - 1):
            raise ParamError(f"ring degree must be a power of two >= 4, got {n}")
        object.__setattr__(self, "coeff_modulus", tuple(int(q) for q in self.coeff_modulus))
        if not self.coeff_modulus:
            raise ParamError("at least one coefficient prime is required")
        if len(set(self.coeff_modulus)) != len(self.coeff_modulus):
            raise ParamError("coefficient primes must be distinct")
        for q in self.coeff_modulus:
            if not is_prime(q):
                raise ParamError(f"coefficient modulus {q} is not prime")
            if (q - 1) % (2 * n) != 0:
                raise ParamError(f"coefficient modulus {q} is not 1 mod {2 * n}")
            if q >= (1 << 31):
                raise ParamError(f"coefficient modulus {q} exceeds 31 bits")
        t = self.plaintext_modulus
        if not is_prime(t):
            raise ParamError(f"plaintext modulus {t} is not prime")
        if (t - 1) % (2 * n) != 0:
            raise ParamError(f"plaintext modulus {t} is not 1 mod {2 * n}")
        if t >= (1 << 42):
            raise ParamError("plaintext modulus above 2^42 is not supported")
        if any(q % t == 0 or t % q == 0 for q in self.coeff_modulus):
            raise ParamError("plaintext modulus must be coprime to every coefficient prime")
        if self.depth_budget < 1:
            raise ParamError(f"depth budget must be >= 1, got {self.depth_budget}")

    @property
    def slot_count(self) -> int:
        return self.ring_degree

    @property
    def rotation_group_size(self) -> int:
        """Slots split into two rotation rows of this size (see he backend docs)."""
        return self.ring_degree // 2

    @cached_property
    def coeff_modulus_product(self) -> int:
        return prod(self.coeff_modulus)

    @cached_property
    def fingerprint(self) -> bytes:
        text = self.canonical_text()
        return hashlib.sha256(text.encode("ascii")).digest()

    def canonical_text(self) -> str:
        """Key=value form used for both the fingerprint and the params file."""
        lines = [
            f"N={self.ring_degree}",
            "primes=" + ",".join(str(q) for q in self.coeff_modulus),
            f"t={self.plaintext_modulus}",
            f"depth={self.depth_budget}",
            f"preset={self.preset_name}",
        ]
        return "\n".join(lines) + "\n"


def default_plaintext_modulus(ring_degree: int) -> int:
    return find_ntt_primes(_PLAINTEXT_BITS, 1, 2 * ring_degree)[0]


def gen_params(preset: str) -> HeParams:
    """Parameters for one of the named presets.

    Raises:
        ParamError: unknown preset name.
    """
    if preset not in _PRESET_SHAPES:
        raise ParamError(f"unknown preset {preset!r}; expected one of {PRESET_NAMES}")
    n, num_primes, depth = _PRESET_SHAPES[preset]
    primes = find_ntt_primes(_COEFF_PRIME_BITS, num_primes, 2 * n)
    return HeParams(
        ring_degree=n,
        coeff_modulus=tuple(primes),
        plaintext_modulus=default_plaintext_modulus(n),
        depth_budget=depth,
        preset_name=preset,
    )


def make_test_params(ring_degree: int, num_primes: int = 6, depth_budget: int = 2) -> HeParams:
    """Small custom parameters for exercising the scheme off the presets."""
    primes = find_ntt_primes(_COEFF_PRIME_BITS, num_primes, 2 * ring_degree)
    return HeParams(
        ring_degree=ring_degree,
        coeff_modulus=tuple(primes),
        plaintext_modulus=default_plaintext_modulus(ring_degree),
        depth_budget=depth_budget,
        preset_name="custom",
    )


def save_params(params: HeParams, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(params.canonical_text())


def load_params(path) -> HeParams:
    fields: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParamError(f"malformed params line: {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    try:
        return HeParams(
            ring_degree=int(fields["N"]),
            coeff_modulus=tuple(int(x) for x in fields["primes"].split(",")),
            plaintext_modulus=int(fields["t"]),
            depth_budget=int(fields["depth"]),
            preset_name=fields.get("preset", "custom"),
        )
    except KeyError as exc:
        raise ParamError(f"params file missing key {exc}") from exc
