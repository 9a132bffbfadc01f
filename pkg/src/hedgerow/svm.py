"""One-vs-all linear SVM inference over a packed encrypted feature vector.

Ternary features ride unscaled in slots 0..d-1 of a single ciphertext.  Per
class the server multiplies by the packed quantized weight row, folds the
first d_padded slots with a rotate-and-add sum, and adds the quantized bias:
one plaintext multiply, log2(d_padded) rotations, one plaintext addition.
Slot 0 of each result decrypts to the fixed-point confidence W_c . x + b_c.

Weights and biases are both quantized at round(value * 2^scale_bits);
features are integers, so products and biases share one scale and decoding
divides by it once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelFormatError


def _next_pow2(x: int) -> int:
    return 1 << max(0, x - 1).bit_length() if x > 1 else 1


@dataclass(frozen=True)
class SvmModel:
    """Quantized one-vs-all linear model: s weight rows and biases."""

    num_classes: int
    num_features: int
    scale_bits: int
    weights: np.ndarray  # (s, d) int64, fixed point
    bias: np.ndarray  # (s,) int64, fixed point

    def __post_init__(self):
        if self.num_classes < 1 or self.num_features < 1:
            raise ModelFormatError("model needs at least one class and one feature")
        if self.weights.shape != (self.num_classes, self.num_features):
            raise ModelFormatError(
                f"weight matrix shape {self.weights.shape} does not match "
                f"({self.num_classes}, {self.num_features})"
            )
        if self.bias.shape != (self.num_classes,):
            raise ModelFormatError("bias length must equal the class count")

    @property
    def quant_scale(self) -> int:
        return 1 << self.scale_bits

    @property
    def d_padded(self) -> int:
        return _next_pow2(self.num_features)

    def worst_case_aggregate(self) -> int:
        """Largest possible |confidence| over ternary inputs."""
        return int(
            (np.abs(self.weights).sum(axis=1) + np.abs(self.bias)).max()
        )


def quantize_model(weights, bias, scale_bits: int, plaintext_modulus: int | None = None) -> SvmModel:
    """Round a real-valued model into fixed point at 2^scale_bits.

    When ``plaintext_modulus`` is given, rejects models whose worst-case
    aggregate could wrap mod t, reporting the minimum modulus needed.
    """
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if w.ndim != 2 or b.ndim != 1:
        raise ModelFormatError("weights must be 2-d and bias 1-d")
    if scale_bits < 0 or scale_bits > 40:
        raise ModelFormatError(f"scale_bits out of range: {scale_bits}")
    scale = float(1 << scale_bits)
    model = SvmModel(
        num_classes=w.shape[0],
        num_features=w.shape[1],
        scale_bits=scale_bits,
        weights=np.round(w * scale).astype(np.int64),
        bias=np.round(b * scale).astype(np.int64),
    )
    if plaintext_modulus is not None:
        check_aggregate_bound(model.worst_case_aggregate(), plaintext_modulus)
    return model


def check_aggregate_bound(aggregate: int, plaintext_modulus: int) -> None:
    """Reject aggregates that could wrap around the plaintext modulus."""
    if 2 * aggregate >= plaintext_modulus:
        raise ModelFormatError(
            f"worst-case aggregate {aggregate} needs plaintext modulus > "
            f"{2 * aggregate}, but parameters provide {plaintext_modulus}"
        )


def svm_scores_clear(model: SvmModel, sample) -> np.ndarray:
    """Exact fixed-point confidences W.x + b for a ternary sample."""
    x = np.asarray(sample, dtype=np.int64)
    if x.shape != (model.num_features,):
        raise ModelFormatError(
            f"sample length {x.shape} does not match {model.num_features} features"
        )
    return model.weights @ x + model.bias


def infer_encrypted(backend, ct_x, model: SvmModel, ek) -> list:
    """Per-class confidence ciphertexts; slot 0 of entry i holds class i.

    ct_x must carry the ternary features in slots 0..d-1 with zeros beyond.
    """
    n = backend.params.slot_count
    if model.d_padded > n:
        raise ModelFormatError(
            f"{model.num_features} features need {model.d_padded} slots, "
            f"parameters provide {n} (multi-ciphertext splitting not supported)"
        )
    outputs = []
    for c in range(model.num_classes):
        row = np.zeros(n, dtype=np.int64)
        row[: model.num_features] = model.weights[c]
        product = backend.mul_pt(ct_x, backend.encode(row))
        folded = backend.sum_slots(product, model.d_padded, ek)
        bias_pt = backend.encode(np.full(n, model.bias[c], dtype=np.int64))
        outputs.append(backend.add_pt(folded, bias_pt))
    return outputs


def confidence_integers(backend, sk, cts, model: SvmModel) -> np.ndarray:
    """Slot-0 confidences as signed fixed-point integers."""
    t = backend.params.plaintext_modulus
    values = np.empty(len(cts), dtype=np.int64)
    for i, ct in enumerate(cts):
        raw = int(backend.decode(backend.decrypt(sk, ct))[0])
        values[i] = raw - t if raw > t // 2 else raw
    return values


def decode_confidences(backend, sk, cts, model: SvmModel) -> np.ndarray:
    """De-scaled real confidences, one per class."""
    return confidence_integers(backend, sk, cts, model) / model.quant_scale
