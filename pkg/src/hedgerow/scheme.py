"""Exact leveled RLWE scheme with full-N slot batching.

Plaintexts are vectors of N slots mod t; ciphertexts are pairs of RNS
residue polynomials mod q = prod(coeff primes).  Multiplication follows the
scale-invariant construction: messages enter as round(q*m/t) (exact
scaling, so the message-dependent noise stays below t/2), and
ciphertext-ciphertext products are computed exactly over the integers (via
a wide auxiliary prime basis) before scaling back by t/q.

Slot geometry: the N slots form two rotation rows of N/2 (see ring.py).
``rotate`` shifts both rows cyclically left by ``steps``; ``swap_rows``
exchanges them; ``sum_slots`` composes the two so that power-of-two block
sums land at the block-start slots.

Everything is deterministic given explicit seeds: randomness comes from
SHAKE-256 expansion of (seed, domain label), nothing else.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DepthExhaustedError,
    FingerprintMismatchError,
    MissingGaloisKeyError,
    ParamError,
)
from .ntt import add_mod, mul_mod, sub_mod
from .params import HeParams
from .ring import RingContext, get_ring

_CBD_BITS = 20  # centered binomial width; sigma = sqrt(20/2) ~ 3.16
_CBD_MASK = np.uint64((1 << _CBD_BITS) - 1)


def _as_seed(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        return seed.to_bytes(32, "big", signed=False)
    raise TypeError(f"seed must be bytes or int, got {type(seed).__name__}")


class Prg:
    """Deterministic byte stream: SHAKE-256 of (seed, domain label)."""

    def __init__(self, seed):
        self._seed = _as_seed(seed)

    def bytes(self, label: str, count: int) -> bytes:
        h = hashlib.shake_256()
        h.update(self._seed)
        h.update(b"|")
        h.update(label.encode("ascii"))
        return h.digest(count)

    def words(self, label: str, count: int) -> np.ndarray:
        raw = self.bytes(label, count * 8)
        return np.frombuffer(raw, dtype="<u8").copy()

    def uniform_rns(self, label: str, ring: RingContext) -> np.ndarray:
        """Uniform element of R_q: independent uniform residues per prime."""
        w = self.words(label, ring.k * ring.n).reshape(ring.k, ring.n)
        return w % ring.q_arr

    def ternary(self, label: str, n: int) -> np.ndarray:
        w = self.words(label, n)
        return (w % np.uint64(3)).astype(np.int64) - 1

    def cbd(self, label: str, n: int) -> np.ndarray:
        """Centered binomial errors of width _CBD_BITS."""
        w = self.words(label, n)
        a = np.bitwise_count(w & _CBD_MASK).astype(np.int64)
        b = np.bitwise_count((w >> np.uint64(_CBD_BITS)) & _CBD_MASK).astype(np.int64)
        return a - b


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PackedPlaintext:
    """N plaintext slots, stored as the coefficient vector of R_t."""

    params: HeParams
    poly: np.ndarray  # (N,) uint64 coefficients mod t

    @cached_property
    def slots(self) -> np.ndarray:
        ring = get_ring(self.params)
        evals = ring.plan_t.forward(self.poly[None, :])[0]
        return evals[ring.slot_to_eval]

    @cached_property
    def _ntt_q(self) -> np.ndarray:
        ring = get_ring(self.params)
        res = (self.poly[None, :].astype(np.int64) % ring.q_arr.astype(np.int64)).astype(
            np.uint64
        )
        return ring.plan_q.forward(res)


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """RLWE ciphertext: 2 parts (3 transiently inside multiplication)."""

    params_fingerprint: bytes
    level: int
    parts: tuple[np.ndarray, ...]  # each (K, N) uint64 residues, coefficient domain

    def __post_init__(self):
        if not 2 <= len(self.parts) <= 3:
            raise ParamError(f"ciphertext must have 2 or 3 parts, got {len(self.parts)}")
        if self.level < 0:
            raise ParamError("ciphertext level cannot be negative")


@dataclass(frozen=True, eq=False)
class SecretKey:
    params: HeParams
    s: np.ndarray  # (K, N) residues of the ternary secret, coefficient domain

    @property
    def fingerprint(self) -> bytes:
        return self.params.fingerprint

    @cached_property
    def _s_ntt(self) -> np.ndarray:
        return get_ring(self.params).plan_q.forward(self.s)


@dataclass(frozen=True, eq=False)
class PublicKey:
    params: HeParams
    b_ntt: np.ndarray  # (K, N), NTT domain
    a_ntt: np.ndarray

    @property
    def fingerprint(self) -> bytes:
        return self.params.fingerprint


KeySwitchKey = tuple  # tuple of (b_ntt, a_ntt) pairs, one per RNS digit


@dataclass(frozen=True, eq=False)
class EvalKeys:
    params: HeParams
    relin: KeySwitchKey
    galois: dict  # effective step (0 < step < N/2) -> KeySwitchKey
    row_swap: KeySwitchKey | None
    declared_steps: tuple[int, ...]

    @property
    def fingerprint(self) -> bytes:
        return self.params.fingerprint


def default_rotation_steps(params: HeParams) -> tuple[int, ...]:
    """+-(powers of two) below the row size: enough for any power-of-two sum width."""
    steps = []
    w = 1
    while w < params.rotation_group_size:
        steps.append(w)
        steps.append(-w)
        w *= 2
    return tuple(steps)


def keygen(params: HeParams, seed, rotation_steps: tuple[int, ...] | None = None):
    """Deterministic key generation.

    Args:
        params: scheme parameters.
        seed: 256-bit value (bytes or int); same seed reproduces identical keys.
        rotation_steps: rotation amounts to build Galois keys for.  Defaults
            to all +-powers of two below the row size, which covers every
            supported ``sum_slots`` width.

    Returns:
        (SecretKey, PublicKey, EvalKeys)
    """
    ring = get_ring(params)
    prg = Prg(seed)
    n, k = ring.n, ring.k

    s_small = prg.ternary("sk", n)
    s = ring.rns_from_small(s_small)
    s_ntt = ring.plan_q.forward(s)

    def rlwe_pair(label: str, payload_ntt: np.ndarray | None):
        """(b, a) with b = -(a*s + e) + payload, all in NTT domain."""
        a = prg.uniform_rns(label + ".a", ring)
        e = ring.rns_from_small(prg.cbd(label + ".e", n))
        a_ntt = ring.plan_q.forward(a)
        b = add_mod(ring.plan_q.pointwise(a_ntt, s_ntt), ring.plan_q.forward(e), ring.q_arr)
        b = sub_mod(np.zeros_like(b), b, ring.q_arr)
        if payload_ntt is not None:
            b = add_mod(b, payload_ntt, ring.q_arr)
        return b, a_ntt

    pk_b, pk_a = rlwe_pair("pk", None)

    def keyswitch_key(label: str, target_ntt: np.ndarray) -> KeySwitchKey:
        digits = []
        for j in range(k):
            payload = mul_mod(target_ntt, ring.crt_unit(j), ring.q_arr)
            digits.append(rlwe_pair(f"{label}.{j}", payload))
        return tuple(digits)

    relin = keyswitch_key("rlk", ring.plan_q.pointwise(s_ntt, s_ntt))

    if rotation_steps is None:
        rotation_steps = default_rotation_steps(params)
    galois = {}
    for step in rotation_steps:
        eff = step % ring.row
        if eff == 0 or eff in galois:
            continue
        g = ring.galois_element(eff)
        s_tau = ring.plan_q.forward(ring.apply_automorphism(s, g))
        galois[eff] = keyswitch_key(f"gk.{eff}", s_tau)
    s_swap = ring.plan_q.forward(ring.apply_automorphism(s, ring.row_swap_element))
    row_swap = keyswitch_key("gk.swap", s_swap)

    sk = SecretKey(params, s)
    pk = PublicKey(params, pk_b, pk_a)
    ek = EvalKeys(params, relin, galois, row_swap, tuple(rotation_steps))
    return sk, pk, ek


# ---------------------------------------------------------------------------
# backend
# ---------------------------------------------------------------------------


class SlotSumMixin:
    """sum_slots built from the backend's own rotate/add/swap primitives."""

    def sum_slots(self, ct, width: int, ek):
        """Rotate-and-add so every slot i holds the sum of input slots i..i+width-1.

        Width must be a power of two <= N; sums wrap within each rotation
        row (within the whole vector for width == N).  In particular slot
        s*width holds the sum of block s for every block-aligned layout.
        """
        n = self.params.slot_count
        if width < 1 or width > n or width & (width - 1):
            raise ParamError(f"sum width must be a power of two in [1, {n}], got {width}")
        row_width = min(width, n // 2)
        step = row_width // 2
        while step >= 1:
            ct = self.add_ct(ct, self.rotate(ct, step, ek))
            step //= 2
        if width == n:
            ct = self.add_ct(ct, self.swap_rows(ct, ek))
        return ct


class HeBackend(SlotSumMixin):
    """Homomorphic operation surface over real ciphertexts.

    All methods are pure functions of their arguments; randomness enters only
    through explicit seeds.  The ClearBackend mirror implements the identical
    surface over plaintext slot vectors.
    """

    is_encrypted = True

    def __init__(self, params: HeParams):
        self.params = params
        self.ring = get_ring(params)

    # -- plaintext side ----------------------------------------------------

    def encode(self, values) -> PackedPlaintext:
        ring = self.ring
        arr = np.asarray(values, dtype=np.int64)
        if arr.ndim != 1:
            raise ParamError("encode expects a 1-d vector")
        if arr.size > ring.n:
            raise ParamError(f"vector of length {arr.size} exceeds {ring.n} slots")
        slots = np.zeros(ring.n, dtype=np.uint64)
        slots[: arr.size] = (arr % np.int64(ring.t)).astype(np.uint64)
        evals = np.empty((1, ring.n), dtype=np.uint64)
        evals[0, ring.slot_to_eval] = slots
        poly = ring.plan_t.inverse(evals)[0]
        return PackedPlaintext(self.params, poly)

    def decode(self, pt: PackedPlaintext) -> np.ndarray:
        return pt.slots.copy()

    # -- keys and encryption -------------------------------------------------

    def keygen(self, seed, rotation_steps: tuple[int, ...] | None = None):
        return keygen(self.params, seed, rotation_steps)

    def encrypt(self, pk: PublicKey, pt: PackedPlaintext, seed) -> Ciphertext:
        self._check_fp(pk.fingerprint)
        ring = self.ring
        prg = Prg(seed)
        u_ntt = ring.plan_q.forward(ring.rns_from_small(prg.ternary("enc.u", ring.n)))
        e1 = ring.rns_from_small(prg.cbd("enc.e1", ring.n))
        e2 = ring.rns_from_small(prg.cbd("enc.e2", ring.n))
        c0 = ring.plan_q.inverse(ring.plan_q.pointwise(pk.b_ntt, u_ntt))
        c0 = add_mod(c0, e1, ring.q_arr)
        c0 = add_mod(c0, ring.scale_plaintext(pt.poly), ring.q_arr)
        c1 = ring.plan_q.inverse(ring.plan_q.pointwise(pk.a_ntt, u_ntt))
        c1 = add_mod(c1, e2, ring.q_arr)
        return Ciphertext(self.params.fingerprint, self.params.depth_budget, (c0, c1))

    def _phase(self, sk: SecretKey, ct: Ciphertext) -> np.ndarray:
        """Residues of c0 + c1*s (+ c2*s^2), coefficient domain."""
        ring = self.ring
        acc = ring.plan_q.pointwise(ring.plan_q.forward(ct.parts[1]), sk._s_ntt)
        if len(ct.parts) == 3:
            c2 = ring.plan_q.forward(ct.parts[2])
            acc = add_mod(
                acc,
                ring.plan_q.pointwise(ring.plan_q.pointwise(c2, sk._s_ntt), sk._s_ntt),
                ring.q_arr,
            )
        return add_mod(ct.parts[0], ring.plan_q.inverse(acc), ring.q_arr)

    def decrypt(self, sk: SecretKey, ct: Ciphertext) -> PackedPlaintext:
        self._check_fp(sk.fingerprint)
        self._check_fp(ct.params_fingerprint)
        ring = self.ring
        x = ring.garner_q.residues_to_ints(self._phase(sk, ct))
        m = ((2 * ring.t * x + ring.q) // (2 * ring.q)) % ring.t
        return PackedPlaintext(self.params, m.astype(np.uint64))

    def noise_budget(self, sk: SecretKey, ct: Ciphertext) -> int:
        """Estimated bits of margin before decryption can fail (0 = exhausted)."""
        self._check_fp(sk.fingerprint)
        self._check_fp(ct.params_fingerprint)
        ring = self.ring
        x = ring.garner_q.residues_to_ints(self._phase(sk, ct))
        w = (ring.t * x) % ring.q
        w = np.where(w > ring.q // 2, w - ring.q, w)
        max_w = int(np.abs(w).max())
        if max_w == 0:
            margin = ring.q // 2
        else:
            margin = ring.q // (2 * max_w)
        return max(0, margin.bit_length() - 1)

    # -- arithmetic ----------------------------------------------------------

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        na, nb = len(a.parts), len(b.parts)
        parts = []
        for i in range(max(na, nb)):
            if i < na and i < nb:
                parts.append(add_mod(a.parts[i], b.parts[i], self.ring.q_arr))
            else:
                parts.append((a.parts[i] if i < na else b.parts[i]).copy())
        return Ciphertext(a.params_fingerprint, min(a.level, b.level), tuple(parts))

    def sub_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self.add_ct(a, self.negate(b))

    def negate(self, a: Ciphertext) -> Ciphertext:
        zero = np.uint64(0)
        parts = tuple(
            np.where(p == zero, zero, self.ring.q_arr - p) for p in a.parts
        )
        return Ciphertext(a.params_fingerprint, a.level, parts)

    def add_pt(self, a: Ciphertext, pt: PackedPlaintext) -> Ciphertext:
        self._check_fp(a.params_fingerprint)
        self._check_fp(pt.params.fingerprint)
        c0 = add_mod(a.parts[0], self.ring.scale_plaintext(pt.poly), self.ring.q_arr)
        return Ciphertext(a.params_fingerprint, a.level, (c0,) + a.parts[1:])

    def sub_pt(self, a: Ciphertext, pt: PackedPlaintext) -> Ciphertext:
        self._check_fp(a.params_fingerprint)
        self._check_fp(pt.params.fingerprint)
        c0 = sub_mod(a.parts[0], self.ring.scale_plaintext(pt.poly), self.ring.q_arr)
        return Ciphertext(a.params_fingerprint, a.level, (c0,) + a.parts[1:])

    def mul_pt(self, a: Ciphertext, pt: PackedPlaintext) -> Ciphertext:
        self._check_fp(a.params_fingerprint)
        self._check_fp(pt.params.fingerprint)
        plan = self.ring.plan_q
        parts = tuple(
            plan.inverse(plan.pointwise(plan.forward(p), pt._ntt_q)) for p in a.parts
        )
        return Ciphertext(a.params_fingerprint, a.level, parts)

    def mul_ct(self, a: Ciphertext, b: Ciphertext, ek: EvalKeys) -> Ciphertext:
        self._check_pair(a, b)
        self._check_fp(ek.fingerprint)
        if a.level < 1 or b.level < 1:
            raise DepthExhaustedError("no multiplicative depth remaining")
        if len(a.parts) != 2 or len(b.parts) != 2:
            raise ParamError("mul_ct expects relinearized 2-part inputs")
        ring = self.ring
        wide_primes, plan_w, garner_w = ring.wide_basis()

        def lift(part: np.ndarray) -> np.ndarray:
            digits = ring.garner_q.to_digits(part)
            neg = ring.garner_q.negative_mask(digits)
            return plan_w.forward(ring.garner_q.digits_to_residues(digits, neg, wide_primes))

        a0, a1 = (lift(p) for p in a.parts)
        b0, b1 = (lift(p) for p in b.parts)
        d0 = plan_w.pointwise(a0, b0)
        d1 = add_mod(plan_w.pointwise(a0, b1), plan_w.pointwise(a1, b0), plan_w.p)
        d2 = plan_w.pointwise(a1, b1)

        def scale_down(d_ntt: np.ndarray) -> np.ndarray:
            digits = garner_w.to_digits(plan_w.inverse(d_ntt))
            x = garner_w.digits_to_ints(digits, garner_w.negative_mask(digits))
            r = (2 * ring.t * x + ring.q) // (2 * ring.q)
            out = np.empty((ring.k, ring.n), dtype=np.uint64)
            for i, p in enumerate(ring.q_primes):
                out[i] = (r % p).astype(np.uint64)
            return out

        c0, c1, c2 = (scale_down(d) for d in (d0, d1, d2))
        r0, r1 = self._keyswitch(c2, ek.relin)
        parts = (add_mod(c0, r0, ring.q_arr), add_mod(c1, r1, ring.q_arr))
        return Ciphertext(a.params_fingerprint, min(a.level, b.level) - 1, parts)

    # -- slot permutations ----------------------------------------------------

    def rotate(self, a: Ciphertext, steps: int, ek: EvalKeys) -> Ciphertext:
        """Cyclic left shift of both slot rows by `steps` (negative = right)."""
        self._check_fp(a.params_fingerprint)
        self._check_fp(ek.fingerprint)
        eff = steps % self.ring.row
        if eff == 0:
            return a
        key = ek.galois.get(eff)
        if key is None:
            raise MissingGaloisKeyError(f"no Galois key for rotation step {steps}")
        return self._apply_galois(a, self.ring.galois_element(eff), key)

    def swap_rows(self, a: Ciphertext, ek: EvalKeys) -> Ciphertext:
        self._check_fp(a.params_fingerprint)
        self._check_fp(ek.fingerprint)
        if ek.row_swap is None:
            raise MissingGaloisKeyError("no Galois key for the row swap")
        return self._apply_galois(a, self.ring.row_swap_element, ek.row_swap)

    def _apply_galois(self, a: Ciphertext, g: int, key: KeySwitchKey) -> Ciphertext:
        if len(a.parts) != 2:
            raise ParamError("rotation expects a relinearized 2-part ciphertext")
        ring = self.ring
        c0 = ring.apply_automorphism(a.parts[0], g)
        c1 = ring.apply_automorphism(a.parts[1], g)
        k0, k1 = self._keyswitch(c1, key)
        return Ciphertext(
            a.params_fingerprint, a.level, (add_mod(c0, k0, ring.q_arr), k1)
        )

    def _keyswitch(self, poly: np.ndarray, key: KeySwitchKey):
        """Per-prime digit keyswitch of a coefficient-domain polynomial."""
        ring = self.ring
        acc0 = ring.zero_rns()
        acc1 = ring.zero_rns()
        for j in range(ring.k):
            digit = poly[j][None, :] % ring.q_arr
            dig_ntt = ring.plan_q.forward(digit)
            acc0 = ring.accumulate_ntt(acc0, dig_ntt, key[j][0])
            acc1 = ring.accumulate_ntt(acc1, dig_ntt, key[j][1])
        return ring.plan_q.inverse(acc0), ring.plan_q.inverse(acc1)

    # -- checks ----------------------------------------------------------------

    def _check_fp(self, fingerprint: bytes) -> None:
        if fingerprint != self.params.fingerprint:
            raise FingerprintMismatchError("object belongs to different parameters")

    def _check_pair(self, a: Ciphertext, b: Ciphertext) -> None:
        self._check_fp(a.params_fingerprint)
        if a.params_fingerprint != b.params_fingerprint:
            raise FingerprintMismatchError("operands belong to different parameters")
