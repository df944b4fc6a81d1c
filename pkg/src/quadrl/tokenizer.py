"""Diagonal-aware serialization of canonical mixed meshes into flat token
sequences, and its exact inversion.

Every face occupies 12 tokens. A triangle is 9 coordinate tokens followed by
three padding tokens (3S, with S = 2^bits). A quad is reordered so a diagonal
runs between positions 0 and 2, emits 9 coordinate tokens for its first three
vertices, and folds a diagonal flag in {0, 1, 2} into the fourth vertex's
tokens as an offset of flag * S.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoordinateOutOfRangeError,
    InconsistentFlagError,
    LengthNotMultipleOf12Error,
    MixedPaddingError,
    NonCanonicalFaceError,
    TokenOutOfRangeError,
)
from .mesh import Face, QuantizedMesh

BLOCK = 12  # tokens per face

# flag -> reordering applied by detokenization (inverse of the serializer)
_FLAG_INVERSE = {
    0: (0, 1, 2, 3),
    1: (0, 3, 1, 2),
    2: (2, 0, 1, 3),
}


@dataclass(frozen=True)
class TokenSequence:
    """Flat token sequence; vocabulary is [0, 3S] with S = 2^bits."""

    tokens: np.ndarray
    bits: int = 10

    def __post_init__(self):
        toks = np.asarray(self.tokens, dtype=np.int64).ravel()
        object.__setattr__(self, "tokens", toks)

    @property
    def special(self) -> int:
        return 1 << self.bits

    @property
    def vocab_size(self) -> int:
        """3S + 1: coordinates, two flag bands, and the padding token."""
        return 3 * self.special + 1

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_blocks(self) -> int:
        return len(self.tokens) // BLOCK


def serialize_face(face: Face, vertices: np.ndarray, bits: int = 10) -> list[int]:
    """Emit the 12-token block for one face.

    Triangles must already lead with their minimum vertex index. Quads may be
    stored in any cyclic rotation; the branch structure selects the canonical
    reordering and the matching diagonal flag.
    """
    S = 1 << bits
    coords = [tuple(int(c) for c in vertices[v]) for v in face]
    for xyz in coords:
        for c in xyz:
            if not (0 <= c < S):
                raise CoordinateOutOfRangeError(f"coordinate {c} outside [0, {S - 1}]")

    if len(face) == 3:
        if face[0] != min(face):
            raise NonCanonicalFaceError(f"triangle {face} does not lead with its minimum index")
        out = [c for xyz in coords for c in xyz]
        out.extend([3 * S, 3 * S, 3 * S])
        return out

    i_min = int(np.argmin(face))
    if i_min == 0 and face[1] < face[3]:
        order, flag = (0, 1, 2, 3), 0
    elif i_min == 0:
        order, flag = (0, 2, 3, 1), 1
    elif i_min == 1:
        order, flag = (1, 2, 0, 3), 2
    elif i_min == 3:
        order, flag = (3, 0, 2, 1), 2
    else:
        raise NonCanonicalFaceError(
            f"quad {face} has its minimum at position 2; the stored 0-2 diagonal "
            "cannot lead with the minimum index"
        )

    out = []
    for j in order[:3]:
        out.extend(coords[j])
    out.extend(c + flag * S for c in coords[order[3]])
    return out


def tokenize(qmesh: QuantizedMesh) -> TokenSequence:
    """Concatenate serialize_face over faces in order."""
    tokens: list[int] = []
    for face in qmesh.faces:
        tokens.extend(serialize_face(face, qmesh.vertices, qmesh.bits))
    return TokenSequence(np.array(tokens, dtype=np.int64), qmesh.bits)


@dataclass
class DetokenizeResult:
    """Mesh recovered from a token stream.

    `face_blocks[i]` is the source block index of face i, so callers can map
    token windows onto surviving faces after permissive drops.
    """

    mesh: QuantizedMesh
    dropped_blocks: int = 0
    dropped_degenerate: int = 0
    face_blocks: list[int] = field(default_factory=list)


def _decode_block(block: np.ndarray, S: int, strict: bool) -> Face | None:
    """Decode one 12-token block into a tuple of quantized vertex triples.

    Returns None for a block that permissive mode should skip; raises in
    strict mode.
    """
    if block.min() < 0 or block.max() > 3 * S:
        if strict:
            raise TokenOutOfRangeError(f"token outside [0, {3 * S}]")
        return None

    pad = block[9:12] == 3 * S
    if block[11] == 3 * S:
        if not pad.all():
            if strict:
                raise MixedPaddingError("triangle block with partial padding")
            return None
        if (block[:9] >= S).any():
            if strict:
                raise TokenOutOfRangeError("triangle coordinate >= S")
            return None
        return tuple(tuple(int(c) for c in block[3 * i : 3 * i + 3]) for i in range(3))

    if pad.any():
        if strict:
            raise MixedPaddingError("quad block containing padding tokens")
        return None
    if strict:
        if (block[:9] >= S).any():
            raise TokenOutOfRangeError("quad base-triangle coordinate >= S")
        if len({int(v) // S for v in block[9:12]}) > 1:
            raise InconsistentFlagError("fourth-vertex components decode different flags")

    # Per-component flag decode; last-wins tolerates inconsistent components
    # in permissive mode.
    flag = 0
    coords = []
    for val in block:
        v = int(val)
        if v >= 2 * S:
            v -= 2 * S
            flag = 2
        elif v >= S:
            v -= S
            flag = 1
        if not (0 <= v < S):
            if strict:
                raise TokenOutOfRangeError("decoded coordinate outside [0, S)")
            return None
        coords.append(v)

    verts = [tuple(coords[3 * i : 3 * i + 3]) for i in range(4)]
    order = _FLAG_INVERSE[flag]
    return tuple(verts[k] for k in order)


def detokenize(seq: TokenSequence, strictness: str = "strict") -> DetokenizeResult:
    """Invert tokenize.

    strict: raise on malformed blocks (trailing partial blocks included).
    permissive: skip malformed blocks and trailing partials, counting drops.

    Vertices are deduplicated in discovery order; faces index that list.
    Faces whose vertices collapse to duplicates are dropped in both modes.
    """
    strict = strictness == "strict"
    if strictness not in ("strict", "permissive"):
        raise ValueError(f"unknown strictness {strictness!r}")
    S = seq.special
    toks = seq.tokens
    n_full = len(toks) // BLOCK
    dropped = 0
    if len(toks) % BLOCK != 0:
        if strict:
            raise LengthNotMultipleOf12Error(f"length {len(toks)} not a multiple of {BLOCK}")
        dropped += 1

    vert_index: dict[tuple[int, int, int], int] = {}
    verts: list[tuple[int, int, int]] = []
    faces: list[Face] = []
    face_blocks: list[int] = []
    degenerate = 0

    for b in range(n_full):
        decoded = _decode_block(toks[b * BLOCK : (b + 1) * BLOCK], S, strict)
        if decoded is None:
            dropped += 1
            continue
        idx = []
        for xyz in decoded:
            if xyz not in vert_index:
                vert_index[xyz] = len(verts)
                verts.append(xyz)
            idx.append(vert_index[xyz])
        if len(set(idx)) != len(idx):
            degenerate += 1
            continue
        faces.append(tuple(idx))
        face_blocks.append(b)

    arr = np.array(verts, dtype=np.int64).reshape(-1, 3)
    mesh = QuantizedMesh(arr, faces, seq.bits)
    return DetokenizeResult(mesh, dropped, degenerate, face_blocks)


@dataclass(frozen=True)
class TokenViolation:
    block: int | None
    code: str
    detail: str = ""


def validate_tokens(seq: TokenSequence) -> list[TokenViolation]:
    """Report every violated token-sequence invariant with its block index."""
    S = seq.special
    report: list[TokenViolation] = []
    toks = seq.tokens
    if len(toks) % BLOCK != 0:
        report.append(TokenViolation(None, "LengthNotMultipleOf12", f"length {len(toks)}"))
    for b in range(len(toks) // BLOCK):
        block = toks[b * BLOCK : (b + 1) * BLOCK]
        if block.min() < 0 or block.max() > 3 * S:
            report.append(TokenViolation(b, "TokenOutOfRange"))
            continue
        pad = block[9:12] == 3 * S
        if pad.any() and not pad.all():
            report.append(TokenViolation(b, "MixedPadding"))
            continue
        if pad.all():
            if (block[:9] >= S).any():
                report.append(TokenViolation(b, "TriangleCoordOutOfRange"))
            continue
        if (block[:9] >= S).any():
            report.append(TokenViolation(b, "QuadCoordOutOfRange"))
        if len(set(int(v) // S for v in block[9:12])) > 1:
            report.append(TokenViolation(b, "InconsistentFlag"))
    return report


# --- token file format -------------------------------------------------------
#
# Binary: 16-byte header (magic "QTOK", version u16, bits u16, count u64,
# little-endian) followed by count u16 tokens. Text mode: one integer per line.

_MAGIC = b"QTOK"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


def write_qtok(seq: TokenSequence, path) -> None:
    if seq.bits > 14:
        raise ValueError("bits > 14 would overflow u16 token storage")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _FORMAT_VERSION, seq.bits, len(seq.tokens)))
        fh.write(seq.tokens.astype("<u2").tobytes())


def read_qtok(path) -> TokenSequence:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, bits, count = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"not a QTOK file: bad magic {magic!r}")
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported QTOK version {version}")
        data = np.frombuffer(fh.read(2 * count), dtype="<u2")
        if len(data) != count:
            raise ValueError("truncated QTOK file")
    return TokenSequence(data.astype(np.int64), bits)


def write_tokens_text(seq: TokenSequence, path) -> None:
    with open(path, "w") as fh:
        for t in seq.tokens:
            fh.write(f"{int(t)}\n")


def read_tokens_text(path, bits: int = 10) -> TokenSequence:
    with open(path) as fh:
        toks = [int(line) for line in fh if line.strip()]
    return TokenSequence(np.array(toks, dtype=np.int64), bits)
