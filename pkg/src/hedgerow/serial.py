"""Binary containers for keys, plaintexts, and ciphertexts.

Layout: magic ``HEGR``, version byte, type-tag byte, the 32-byte params
fingerprint, then a stream of little-endian 64-bit words.  Every polynomial
is written as its residue limbs in (prime-index-major, coefficient-minor)
order.  Word streams per type:

* plaintext  : part count (=1), N coefficient limbs mod t
* ciphertext : part count, level, then per part K*N limbs
* secret key : part count (=1), K*N limbs (coefficient domain)
* public key : part count (=2), 2 * K*N limbs (NTT domain, as held in memory)
* eval keys  : digit count K; relin digits (K * 2 polys); Galois entry count,
  then per entry the effective step followed by K * 2 polys (sorted by step);
  a row-swap flag and its K * 2 polys when present; finally the declared
  rotation-step list (two's-complement words).

Deserialization always validates the fingerprint against the caller's
parameters and fails on truncation, bad magic, or version mismatch.
"""

from __future__ import annotations

import numpy as np

from .errors import FingerprintMismatchError, SerializationError
from .params import HeParams
from .scheme import Ciphertext, EvalKeys, PackedPlaintext, PublicKey, SecretKey

MAGIC = b"HEGR"
VERSION = 1

TAG_PLAINTEXT = 1
TAG_CIPHERTEXT = 2
TAG_SECRET_KEY = 3
TAG_PUBLIC_KEY = 4
TAG_EVAL_KEYS = 5

_U64_MAX = (1 << 64) - 1


def _header(tag: int, fingerprint: bytes) -> bytearray:
    out = bytearray(MAGIC)
    out.append(VERSION)
    out.append(tag)
    out.extend(fingerprint)
    return out


def _poly_bytes(poly: np.ndarray) -> bytes:
    return np.ascontiguousarray(poly, dtype="<u8").tobytes()


def _words(values) -> bytes:
    return np.asarray(values, dtype="<u8").tobytes()


class _Reader:
    def __init__(self, data: bytes, expected_tag: int, params: HeParams):
        if len(data) < 38:
            raise SerializationError("container truncated before header")
        if data[:4] != MAGIC:
            raise SerializationError("bad magic; not a HEGR container")
        if data[4] != VERSION:
            raise SerializationError(f"unsupported container version {data[4]}")
        if data[5] != expected_tag:
            raise SerializationError(
                f"container holds type tag {data[5]}, expected {expected_tag}"
            )
        if bytes(data[6:38]) != params.fingerprint:
            raise FingerprintMismatchError("container was written under different parameters")
        self._view = memoryview(data)
        self._pos = 38

    def words(self, count: int) -> np.ndarray:
        end = self._pos + 8 * count
        if end > len(self._view):
            raise SerializationError("container truncated")
        out = np.frombuffer(self._view[self._pos : end], dtype="<u8").copy()
        self._pos = end
        return out

    def u64(self) -> int:
        return int(self.words(1)[0])

    def poly(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        return self.words(n).reshape(shape).astype(np.uint64)

    def finish(self) -> None:
        if self._pos != len(self._view):
            raise SerializationError("trailing bytes after container payload")


# -- plaintext ---------------------------------------------------------------


def serialize_plaintext(pt: PackedPlaintext) -> bytes:
    out = _header(TAG_PLAINTEXT, pt.params.fingerprint)
    out += _words([1])
    out += _poly_bytes(pt.poly)
    return bytes(out)


def deserialize_plaintext(data: bytes, params: HeParams) -> PackedPlaintext:
    r = _Reader(data, TAG_PLAINTEXT, params)
    if r.u64() != 1:
        raise SerializationError("plaintext container must hold one part")
    poly = r.poly((params.ring_degree,))
    r.finish()
    return PackedPlaintext(params, poly)


# -- ciphertext ----------------------------------------------------------------


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    out = _header(TAG_CIPHERTEXT, ct.params_fingerprint)
    out += _words([len(ct.parts), ct.level])
    for part in ct.parts:
        out += _poly_bytes(part)
    return bytes(out)


def deserialize_ciphertext(data: bytes, params: HeParams) -> Ciphertext:
    r = _Reader(data, TAG_CIPHERTEXT, params)
    count = r.u64()
    if not 2 <= count <= 3:
        raise SerializationError(f"ciphertext part count {count} out of range")
    level = r.u64()
    shape = (len(params.coeff_modulus), params.ring_degree)
    parts = tuple(r.poly(shape) for _ in range(count))
    r.finish()
    return Ciphertext(params.fingerprint, level, parts)


# -- keys ------------------------------------------------------------------------


def serialize_secret_key(sk: SecretKey) -> bytes:
    out = _header(TAG_SECRET_KEY, sk.fingerprint)
    out += _words([1])
    out += _poly_bytes(sk.s)
    return bytes(out)


def deserialize_secret_key(data: bytes, params: HeParams) -> SecretKey:
    r = _Reader(data, TAG_SECRET_KEY, params)
    if r.u64() != 1:
        raise SerializationError("secret key container must hold one part")
    s = r.poly((len(params.coeff_modulus), params.ring_degree))
    r.finish()
    return SecretKey(params, s)


def serialize_public_key(pk: PublicKey) -> bytes:
    out = _header(TAG_PUBLIC_KEY, pk.fingerprint)
    out += _words([2])
    out += _poly_bytes(pk.b_ntt)
    out += _poly_bytes(pk.a_ntt)
    return bytes(out)


def deserialize_public_key(data: bytes, params: HeParams) -> PublicKey:
    r = _Reader(data, TAG_PUBLIC_KEY, params)
    if r.u64() != 2:
        raise SerializationError("public key container must hold two parts")
    shape = (len(params.coeff_modulus), params.ring_degree)
    b = r.poly(shape)
    a = r.poly(shape)
    r.finish()
    return PublicKey(params, b, a)


def _write_ksk(out: bytearray, ksk) -> None:
    for b_ntt, a_ntt in ksk:
        out += _poly_bytes(b_ntt)
        out += _poly_bytes(a_ntt)


def _read_ksk(r: _Reader, digits: int, shape) -> tuple:
    return tuple((r.poly(shape), r.poly(shape)) for _ in range(digits))


def serialize_eval_keys(ek: EvalKeys) -> bytes:
    out = _header(TAG_EVAL_KEYS, ek.fingerprint)
    digits = len(ek.relin)
    out += _words([digits])
    _write_ksk(out, ek.relin)
    steps = sorted(ek.galois)
    out += _words([len(steps)])
    for step in steps:
        out += _words([step])
        _write_ksk(out, ek.galois[step])
    out += _words([1 if ek.row_swap is not None else 0])
    if ek.row_swap is not None:
        _write_ksk(out, ek.row_swap)
    out += _words([len(ek.declared_steps)])
    out += _words([s & _U64_MAX for s in ek.declared_steps])
    return bytes(out)


def deserialize_eval_keys(data: bytes, params: HeParams) -> EvalKeys:
    r = _Reader(data, TAG_EVAL_KEYS, params)
    k = len(params.coeff_modulus)
    shape = (k, params.ring_degree)
    digits = r.u64()
    if digits != k:
        raise SerializationError(f"eval keys carry {digits} digits, parameters need {k}")
    relin = _read_ksk(r, digits, shape)
    galois = {}
    for _ in range(r.u64()):
        step = r.u64()
        galois[step] = _read_ksk(r, digits, shape)
    row_swap = _read_ksk(r, digits, shape) if r.u64() else None
    declared = []
    count = r.u64()
    for w in r.words(count):
        w = int(w)
        declared.append(w - (1 << 64) if w >= (1 << 63) else w)
    r.finish()
    return EvalKeys(params, relin, galois, row_swap, tuple(declared))
