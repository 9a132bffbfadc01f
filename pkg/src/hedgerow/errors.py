"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 2 (argparse),
format/validation failures exit 3, crypto and noise failures exit 4.
"""


class HedgerowError(Exception):
    """Base class for all package-specific failures."""


class ParamError(HedgerowError, ValueError):
    """Invalid or inconsistent scheme parameters."""


class ModelFormatError(HedgerowError, ValueError):
    """Malformed or inadmissible model / dataset / layout input."""


class SerializationError(HedgerowError, ValueError):
    """Bad magic, version mismatch, or truncated container."""


class FingerprintMismatchError(HedgerowError):
    """Object was produced under different scheme parameters."""


class DepthExhaustedError(HedgerowError):
    """Ciphertext has no multiplicative budget left."""


class MissingGaloisKeyError(HedgerowError):
    """No Galois key was generated for the requested rotation step."""


class NoiseBudgetError(HedgerowError):
    """Noise margin reached zero; decryption is no longer guaranteed."""
