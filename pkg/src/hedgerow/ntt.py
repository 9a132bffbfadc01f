"""Negacyclic number-theoretic transforms over word-sized prime moduli.

The forward transform maps coefficient vectors of Z_p[x]/(x^N + 1) to their
evaluations at the odd powers of a primitive 2N-th root of unity psi:

    out[k] = a(psi^(2k+1))   for k = 0 .. N-1  (natural order)

so pointwise multiplication in the transform domain is exactly negacyclic
(x^N = -1) convolution.  Transforms are batched over a leading axis, one
modulus per row, which keeps the per-stage work in a handful of vectorized
uint64 operations.

Moduli up to 2^31 use plain 64-bit products; moduli up to 2^42 (the packed
plaintext modulus) go through a split-multiply path that never overflows
uint64.
"""

from __future__ import annotations

import numpy as np

_MASK21 = (1 << 21) - 1

# deterministic Miller-Rabin witnesses for n < 2^64
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic primality test for n < 2^64."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(bit_size: int, count: int, two_n: int) -> list[int]:
    """Largest `count` primes below 2^bit_size congruent to 1 mod two_n."""
    primes = []
    k = ((1 << bit_size) - 1) // two_n
    while len(primes) < count and k > 0:
        p = k * two_n + 1
        if p < (1 << bit_size) and is_prime(p):
            primes.append(p)
        k -= 1
    if len(primes) < count:
        raise ValueError(f"not enough {bit_size}-bit primes = 1 mod {two_n}")
    return primes


def _factorize(n: int) -> list[int]:
    """Distinct prime factors by trial division (n small after 2-stripping)."""
    factors = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            factors.append(d)
            while n % d == 0:
                n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        factors.append(n)
    return factors


def primitive_root(p: int) -> int:
    """Smallest generator of the multiplicative group mod prime p."""
    order = p - 1
    factors = _factorize(order)
    g = 2
    while True:
        if all(pow(g, order // f, p) != 1 for f in factors):
            return g
        g += 1


def root_of_unity(order: int, p: int) -> int:
    """A primitive `order`-th root of unity mod p; requires order | p-1."""
    if (p - 1) % order != 0:
        raise ValueError(f"{order} does not divide {p}-1")
    g = primitive_root(p)
    w = pow(g, (p - 1) // order, p)
    assert pow(w, order, p) == 1
    return w


def _mul_mod_small(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    return (a * b) % p


def _mul_mod_wide(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    # split multiplier: exact for p < 2^42, all intermediates < 2^64
    hi = (((a >> 21) * b) % p << 21) % p
    return (hi + (a & _MASK21) * b) % p


def mul_mod(a: np.ndarray, b: np.ndarray, p) -> np.ndarray:
    """Elementwise (a*b) mod p on uint64 arrays; p may be scalar or (K,1)."""
    p_arr = np.asarray(p, dtype=np.uint64)
    if int(p_arr.max()) < (1 << 31):
        return _mul_mod_small(a, b, p_arr)
    if int(p_arr.max()) < (1 << 42):
        return _mul_mod_wide(a, b, p_arr)
    raise ValueError("modulus too large for 64-bit modular multiply")


def add_mod(a: np.ndarray, b: np.ndarray, p) -> np.ndarray:
    s = a + b
    return np.where(s >= p, s - p, s)


def sub_mod(a: np.ndarray, b: np.ndarray, p) -> np.ndarray:
    d = a + (p - b)
    return np.where(d >= p, d - p, d)


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.uint64)
    rev = np.zeros(n, dtype=np.uint64)
    for _ in range(bits):
        rev = (rev << np.uint64(1)) | (idx & np.uint64(1))
        idx >>= np.uint64(1)
    return rev.astype(np.intp)


class NttPlan:
    """Precomputed tables for batched negacyclic NTTs.

    One plan covers a fixed transform size ``n`` and a fixed tuple of
    moduli, each of which must be a prime congruent to 1 mod 2n.  Arrays
    passed to :meth:`forward` / :meth:`inverse` have shape (K, n) with
    row k reduced modulo ``moduli[k]``.
    """

    def __init__(self, n: int, moduli: tuple[int, ...]):
        if n < 2 or n & (n - 1):
            raise ValueError(f"transform size must be a power of two >= 2, got {n}")
        self.n = n
        self.moduli = tuple(int(m) for m in moduli)
        for m in self.moduli:
            if (m - 1) % (2 * n) != 0:
                raise ValueError(f"modulus {m} is not 1 mod {2 * n}")
        if max(self.moduli) >= (1 << 42):
            raise ValueError("moduli above 2^42 are not supported")
        self._wide = max(self.moduli) >= (1 << 31)
        self._mulmod = _mul_mod_wide if self._wide else _mul_mod_small

        k = len(self.moduli)
        self.p = np.array(self.moduli, dtype=np.uint64).reshape(k, 1)
        self._bitrev = _bit_reverse_indices(n)

        psis = [root_of_unity(2 * n, m) for m in self.moduli]
        # pick the canonical psi with psi^n = -1 (any 2n-th primitive root works)
        for i, m in enumerate(self.moduli):
            assert pow(psis[i], n, m) == m - 1

        def power_table(bases: list[int], count: int) -> np.ndarray:
            tbl = np.empty((k, count), dtype=np.uint64)
            for row, (base, m) in enumerate(zip(bases, self.moduli)):
                acc = 1
                for j in range(count):
                    tbl[row, j] = acc
                    acc = acc * base % m
            return tbl

        self._psi_pow = power_table(psis, n)
        self._psi_inv_pow = power_table([pow(s, -1, m) for s, m in zip(psis, self.moduli)], n)
        omegas = [s * s % m for s, m in zip(psis, self.moduli)]
        omegas_inv = [pow(w, -1, m) for w, m in zip(omegas, self.moduli)]

        # per-stage twiddles: stage with block size `size` uses omega^(n/size * j)
        self._stage_tw = []
        self._stage_tw_inv = []
        size = 2
        while size <= n:
            half = size // 2
            step = n // size
            fw = power_table([pow(w, step, m) for w, m in zip(omegas, self.moduli)], half)
            bw = power_table([pow(w, step, m) for w, m in zip(omegas_inv, self.moduli)], half)
            self._stage_tw.append(fw.reshape(k, 1, half))
            self._stage_tw_inv.append(bw.reshape(k, 1, half))
            size *= 2
        self._n_inv = np.array(
            [pow(n, -1, m) for m in self.moduli], dtype=np.uint64
        ).reshape(k, 1)

    def _cyclic(self, a: np.ndarray, tables: list[np.ndarray]) -> np.ndarray:
        k, n = a.shape
        p3 = self.p.reshape(k, 1, 1)
        x = a[:, self._bitrev]
        for stage, tw in enumerate(tables):
            size = 2 << stage
            half = size // 2
            x = x.reshape(k, n // size, size)
            lo = x[:, :, :half]
            hi = self._mulmod(x[:, :, half:], tw, p3)
            x = np.concatenate((add_mod(lo, hi, p3), sub_mod(lo, hi, p3)), axis=2)
        return x.reshape(k, n)

    def forward(self, a: np.ndarray) -> np.ndarray:
        """Negacyclic NTT: out[k][j] = a_k(psi^(2j+1)) in natural order."""
        twisted = self._mulmod(a, self._psi_pow, self.p)
        return self._cyclic(twisted, self._stage_tw)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`forward` (exact)."""
        x = self._cyclic(a, self._stage_tw_inv)
        x = self._mulmod(x, self._n_inv, self.p)
        return self._mulmod(x, self._psi_inv_pow, self.p)

    def pointwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self._mulmod(a, b, self.p)

    def negacyclic_mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Negacyclic product of coefficient-domain inputs."""
        return self.inverse(self.pointwise(self.forward(a), self.forward(b)))
