"""Derived ring machinery shared by every scheme operation.

A :class:`RingContext` owns, for one parameter set:

* batched NTT plans for the coefficient primes, the plaintext modulus, and
  (built lazily) a wide auxiliary basis large enough to hold exact integer
  tensor products of two ciphertext parts;
* the slot permutation realizing full-N batching.  Slots form two rotation
  rows of N/2: slot j < N/2 is the evaluation at psi^(3^j mod 2N), slot
  N/2+j at psi^(-3^j mod 2N).  The automorphism x -> x^(3^r) rotates both
  rows left by r; x -> x^(2N-1) swaps the rows;
* Garner mixed-radix conversion between RNS residues, other prime bases,
  and centered big integers (used for exact multiply scaling, decryption,
  and noise measurement).
"""

from __future__ import annotations

import threading
from functools import lru_cache
from math import prod

import numpy as np

from .ntt import NttPlan, add_mod, find_ntt_primes, mul_mod
from .params import HeParams

_WIDE_PRIME_BITS = 30


class GarnerBasis:
    """Mixed-radix conversion for a fixed RNS prime basis."""

    def __init__(self, primes: tuple[int, ...]):
        self.primes = tuple(int(p) for p in primes)
        self.count = len(self.primes)
        self.product = prod(self.primes)
        self.half = (self.product - 1) // 2  # product is odd: x > half <=> centered negative

        # prefix[i] = product of primes[:i]; digits v satisfy x = sum v_i * prefix_i
        self.prefix = [1]
        for p in self.primes[:-1]:
            self.prefix.append(self.prefix[-1] * p)
        self._inv = [
            pow(self.prefix[i] % p, -1, p) for i, p in enumerate(self.primes)
        ]
        # prefix_mod[i][j] = prefix[i] mod primes[j]
        self._prefix_mod = [
            [pf % p for p in self.primes] for pf in self.prefix
        ]
        self._half_digits = self._int_digits(self.half)

    def _int_digits(self, x: int) -> list[int]:
        digits = []
        for p in self.primes:
            digits.append(x % p)
            x //= p
        return digits

    def to_digits(self, residues: np.ndarray) -> np.ndarray:
        """Garner digits of the values whose RNS residues are given, shape (K, N)."""
        k = self.count
        v = np.empty_like(residues)
        for i in range(k):
            p = np.uint64(self.primes[i])
            acc = residues[i] % p
            for j in range(i):
                sub = v[j] * np.uint64(self._prefix_mod[j][i]) % p
                acc = (acc + p - sub) % p
            v[i] = acc * np.uint64(self._inv[i]) % p
        return v

    def negative_mask(self, digits: np.ndarray) -> np.ndarray:
        """True where the represented value exceeds product/2 (centered negative)."""
        ge = np.zeros(digits.shape[1], dtype=bool)
        for i in range(self.count):  # least significant digit first; MSD decides
            h = np.uint64(self._half_digits[i])
            ge = (digits[i] > h) | ((digits[i] == h) & ge)
        return ge

    def digits_to_residues(
        self, digits: np.ndarray, negative: np.ndarray, target_primes: tuple[int, ...]
    ) -> np.ndarray:
        """Centered values reduced modulo each target prime, shape (L, N)."""
        n = digits.shape[1]
        out = np.empty((len(target_primes), n), dtype=np.uint64)
        for row, w in enumerate(target_primes):
            wp = np.uint64(w)
            acc = np.zeros(n, dtype=np.uint64)
            for i in range(self.count):
                acc = (acc + digits[i] * np.uint64(self.prefix[i] % w)) % wp
            correction = np.where(negative, np.uint64(self.product % w), np.uint64(0))
            out[row] = (acc + wp - correction) % wp
        return out

    def digits_to_ints(self, digits: np.ndarray, negative: np.ndarray) -> np.ndarray:
        """Centered Python-int values as an object array of shape (N,)."""
        acc = digits[0].astype(object)
        for i in range(1, self.count):
            acc = acc + digits[i].astype(object) * self.prefix[i]
        return acc - negative.astype(object) * self.product

    def residues_to_ints(self, residues: np.ndarray) -> np.ndarray:
        digits = self.to_digits(residues)
        return self.digits_to_ints(digits, self.negative_mask(digits))


class RingContext:
    """Precomputed tables for one parameter set."""

    def __init__(self, params: HeParams):
        self.params = params
        self.n = params.ring_degree
        self.two_n = 2 * self.n
        self.row = self.n // 2
        self.q_primes = params.coeff_modulus
        self.k = len(self.q_primes)
        self.q = params.coeff_modulus_product
        self.t = params.plaintext_modulus

        self.plan_q = NttPlan(self.n, self.q_primes)
        self.plan_t = NttPlan(self.n, (self.t,))
        self.garner_q = GarnerBasis(self.q_primes)

        self.q_arr = np.array(self.q_primes, dtype=np.uint64).reshape(self.k, 1)
        # exact message scaling round(q*m/t): since q = 0 mod q_i, the residue
        # is ((t//2 - (q*m + t//2) mod t) * t^-1) mod q_i, all in 64-bit
        self._q_mod_t = np.uint64(self.q % self.t)
        self._t_half = np.uint64(self.t // 2)
        self._t_inv_mod_q = np.array(
            [pow(self.t % p, -1, p) for p in self.q_primes], dtype=np.uint64
        ).reshape(self.k, 1)

        # crt_unit[j] = 1 mod q_j, 0 mod the others; reduced per prime for keyswitch keys
        self._crt_units = []
        for j, p in enumerate(self.q_primes):
            qj_hat = self.q // p
            unit = qj_hat * pow(qj_hat % p, -1, p)
            self._crt_units.append(
                np.array([unit % pi for pi in self.q_primes], dtype=np.uint64).reshape(self.k, 1)
            )

        # slot j < N/2 evaluates at psi^(3^j); slot N/2+j at psi^(-3^j); the
        # forward NTT emits evaluation at psi^(2k+1) in position k
        exps = np.empty(self.n, dtype=np.int64)
        e = 1
        for j in range(self.row):
            exps[j] = e
            exps[self.row + j] = self.two_n - e
            e = e * 3 % self.two_n
        self.slot_to_eval = ((exps - 1) // 2).astype(np.intp)

        self._lock = threading.Lock()
        self._auto_maps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._wide: tuple[tuple[int, ...], NttPlan, GarnerBasis] | None = None

    # -- galois -------------------------------------------------------------

    def galois_element(self, step: int) -> int:
        """Automorphism exponent rotating both slot rows left by `step`."""
        return pow(3, step % self.row, self.two_n)

    @property
    def row_swap_element(self) -> int:
        return self.two_n - 1

    def _auto_map(self, g: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._auto_maps.get(g)
        if cached is not None:
            return cached
        with self._lock:
            cached = self._auto_maps.get(g)
            if cached is None:
                src = np.arange(self.n, dtype=np.int64)
                e = src * g % self.two_n
                neg = e >= self.n
                dst = np.where(neg, e - self.n, e).astype(np.intp)
                cached = (dst, neg)
                self._auto_maps[g] = cached
        return cached

    def apply_automorphism(self, poly: np.ndarray, g: int) -> np.ndarray:
        """x -> x^g on a (K, N) residue array in coefficient domain."""
        dst, neg = self._auto_map(g)
        flipped = np.where(poly == 0, np.uint64(0), self.q_arr - poly)
        vals = np.where(neg[None, :], flipped, poly)
        out = np.empty_like(poly)
        out[:, dst] = vals
        return out

    def apply_automorphism_mod_t(self, poly: np.ndarray, g: int) -> np.ndarray:
        """Same automorphism on a (N,) plaintext coefficient vector."""
        dst, neg = self._auto_map(g)
        t = np.uint64(self.t)
        flipped = np.where(poly == 0, np.uint64(0), t - poly)
        vals = np.where(neg, flipped, poly)
        out = np.empty_like(poly)
        out[dst] = vals
        return out

    # -- bases --------------------------------------------------------------

    def wide_basis(self) -> tuple[tuple[int, ...], NttPlan, GarnerBasis]:
        """Auxiliary prime basis holding exact ciphertext tensor products."""
        if self._wide is None:
            with self._lock:
                if self._wide is None:
                    # d1 = a0*b1 + a1*b0 is bounded by 2*N*(q/2)^2 in magnitude
                    bound = 2 * self.n * (self.q // 2 + 1) ** 2
                    need = 4 * bound
                    count = (need.bit_length() + _WIDE_PRIME_BITS - 2) // (
                        _WIDE_PRIME_BITS - 1
                    )
                    primes = find_ntt_primes(_WIDE_PRIME_BITS, count, self.two_n)
                    while prod(primes) <= need:
                        count += 1
                        primes = find_ntt_primes(_WIDE_PRIME_BITS, count, self.two_n)
                    assert not set(primes) & set(self.q_primes)
                    wide = tuple(primes)
                    self._wide = (wide, NttPlan(self.n, wide), GarnerBasis(wide))
        return self._wide

    # -- small helpers ------------------------------------------------------

    def rns_from_small(self, coeffs: np.ndarray) -> np.ndarray:
        """Residues of an int64 coefficient vector (values within +-2^62)."""
        return (coeffs[None, :] % self.q_arr.astype(np.int64)).astype(np.uint64)

    def scale_plaintext(self, poly_mod_t: np.ndarray) -> np.ndarray:
        """Residues of round(q * m / t) for a plaintext coefficient vector.

        Exact scaling keeps the message-dependent noise term at t/2 instead
        of the (q mod t) * m ~ t^2 of floor(q/t) scaling.
        """
        t = np.uint64(self.t)
        rho = add_mod(
            mul_mod(poly_mod_t[None, :], self._q_mod_t, t), self._t_half, t
        )
        diff = (self._t_half.astype(np.int64) - rho.astype(np.int64)) % self.q_arr.astype(
            np.int64
        )
        return mul_mod(diff.astype(np.uint64), self._t_inv_mod_q, self.q_arr)

    def crt_unit(self, j: int) -> np.ndarray:
        return self._crt_units[j]

    def zero_rns(self) -> np.ndarray:
        return np.zeros((self.k, self.n), dtype=np.uint64)

    def accumulate_ntt(self, acc: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return add_mod(acc, self.plan_q.pointwise(a, b), self.q_arr)


@lru_cache(maxsize=8)
def _ring_by_key(fingerprint: bytes, params: HeParams) -> RingContext:
    return RingContext(params)


def get_ring(params: HeParams) -> RingContext:
    """Cached RingContext for the given parameters."""
    return _ring_by_key(params.fingerprint, params)
