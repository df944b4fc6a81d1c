"""Exception types shared across the package."""


class QuadRLError(Exception):
    """Base class for all package errors."""


class EmptyMeshError(QuadRLError):
    """Mesh has no vertices or no usable faces."""


class DegenerateBoundsError(QuadRLError):
    """All vertices coincide; the bounding box has no extent."""


class InvalidFaceError(QuadRLError):
    """Face violates the mesh invariants (bad index, repeat, or arity)."""


class NonCanonicalFaceError(QuadRLError):
    """Face does not start with its minimum vertex index."""


class CoordinateOutOfRangeError(QuadRLError):
    """Quantized coordinate outside [0, 2^bits - 1]."""


class TokenError(QuadRLError):
    """Base class for token-stream decoding errors."""


class LengthNotMultipleOf12Error(TokenError):
    """Token sequence length is not a multiple of the face-block size."""


class MixedPaddingError(TokenError):
    """Some but not all of the last three tokens in a block are padding."""


class InconsistentFlagError(TokenError):
    """Fourth-vertex components decode to different diagonal flags."""


class TokenOutOfRangeError(TokenError):
    """Token outside the valid vocabulary range."""


class EmptySetError(QuadRLError):
    """Point-set operation received an empty set."""


class NoAreaError(QuadRLError):
    """Mesh has no face with positive area."""


class EmptyWindowError(QuadRLError):
    """Truncation window contains no faces."""


class NonFiniteLogProbError(QuadRLError):
    """Log-probability input is NaN or infinite."""


class ShapeMismatchError(QuadRLError):
    """Gradient or parameter arrays have incompatible shapes."""


class TokenOutOfVocabError(QuadRLError):
    """Token id is outside the policy vocabulary."""


class WindowOutOfRangeError(QuadRLError):
    """Requested (m, w) window does not fit in the sequence."""


class EmptyCorpusError(QuadRLError):
    """Corpus-level metric received an empty mesh list."""


class InsufficientDataError(QuadRLError):
    """Replay buffer cannot satisfy a sample request."""


class StarvationTimeoutError(QuadRLError):
    """Trainer waited too long for rollout data at the required version."""
