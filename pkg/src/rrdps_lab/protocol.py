"""Honest round-robin differential-phase-shift (RRDPS) rounds.

Alice encodes an L-bit random key as per-pulse phases (-1)**s_k on a
single-photon train.  The receiver picks a delay r and interferes pulse
pairs (k, k+r); a detection at pair (i, j) reveals the sifted bit
s_i XOR s_j.  The delay interferometer is modelled as one projective
measurement per round over a disjoint pairing of pulse indices drawn
with a random alignment offset; pulses the pairing cannot cover are
counted as losses.  Pulse indices are 1-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import sqrt

import numpy as np

from .errors import ParameterError

PAIRING_NOTE = (
    "delay-r interferometer modelled as disjoint (k, k+r) pairs greedily "
    "packed from a random offset in [0, r); pulses left unpaired are losses"
)


@dataclass
class KeyBits:
    """Alice's random phase bits s_1 .. s_L for one pulse train."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1 or self.bits.size < 2:
            raise ParameterError("key needs at least 2 bits")
        if np.any(self.bits > 1):
            raise ParameterError("key bits must be 0 or 1")

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, KeyBits) and np.array_equal(self.bits, other.bits)


@dataclass
class EncodingState:
    """Single-photon amplitudes over the L pulse modes (unit norm)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.ndim != 1 or self.amplitudes.size < 2:
            raise ParameterError("need at least 2 pulse modes")
        norm = float(np.sum(np.abs(self.amplitudes) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ParameterError(f"state norm {norm!r} is not 1")

    def __len__(self) -> int:
        return int(self.amplitudes.size)


@dataclass(frozen=True)
class DetectionRecord:
    """One interferometer outcome: pulse pair (i, j) and measured parity,
    or a loss."""

    i: int | None
    j: int | None
    parity: int | None
    lost: bool = False

    def __post_init__(self):
        if self.lost:
            return
        if self.i is None or self.j is None or not 1 <= self.i < self.j:
            raise ParameterError(f"bad detection pair ({self.i}, {self.j})")
        if self.parity not in (0, 1):
            raise ParameterError(f"parity must be 0 or 1, got {self.parity}")


LOST = DetectionRecord(None, None, None, lost=True)


@dataclass(frozen=True)
class RoundRecord:
    """Everything produced by one protocol round."""

    key_bits: KeyBits
    r: int
    detection: DetectionRecord
    alice_sifted: int | None
    bob_sifted: int | None

    def __post_init__(self):
        det = self.detection
        if det.lost:
            if self.alice_sifted is not None or self.bob_sifted is not None:
                raise ParameterError("lost round cannot carry sifted bits")
        else:
            if det.j - det.i != self.r:
                raise ParameterError(f"pair {det.i, det.j} does not match delay {self.r}")


def generate_key_bits(L: int, rng: np.random.Generator) -> KeyBits:
    """L independent fair bits; deterministic given the generator state."""
    if L < 2:
        raise ParameterError(f"L must be >= 2, got {L}")
    return KeyBits(rng.integers(0, 2, size=L, dtype=np.uint8))


def encode_state(key: KeyBits) -> EncodingState:
    """Uniform-amplitude single photon with phase (-1)**s_k on mode k."""
    signs = 1.0 - 2.0 * key.bits.astype(float)
    return EncodingState(signs / sqrt(len(key)))


def sift(key: KeyBits, i: int, j: int) -> int:
    """Alice's sifted bit s_i XOR s_j for announced indices (1-based)."""
    if not 1 <= i < j <= len(key):
        raise ParameterError(f"indices ({i}, {j}) out of range for L={len(key)}")
    return int(key.bits[i - 1] ^ key.bits[j - 1])


@lru_cache(maxsize=None)
def disjoint_pairing(L: int, r: int, offset: int = 0) -> tuple[tuple[int, int], ...]:
    """Disjoint (k, k+r) pairs packed greedily scanning up from 1 + offset.

    The scan pairs runs of r consecutive starts and then skips their
    partners, so for L >> r at most about 2r indices stay unpaired and
    the uncovered fraction vanishes as L grows.
    """
    if not 1 <= r <= L - 1:
        raise ParameterError(f"delay r must be in [1, {L - 1}], got {r}")
    if offset < 0:
        raise ParameterError("offset must be >= 0")
    used = bytearray(L + r + 2)
    pairs = []
    for k in range(1 + offset, L - r + 1):
        if not used[k] and not used[k + r]:
            pairs.append((k, k + r))
            used[k] = used[k + r] = 1
    return tuple(pairs)


def pairing_outcomes(state: EncodingState, r: int, offset: int):
    """Outcome table of the pairing measurement at a fixed offset.

    Yields (i, j, parity, probability) for the two interference outcomes
    of each pair; the leftover probability mass sits on unpaired modes
    and is a loss.  Weights over all outcomes plus losses sum to 1.
    """
    amps = state.amplitudes
    for i, j in disjoint_pairing(len(state), r, offset):
        ai, aj = amps[i - 1], amps[j - 1]
        yield i, j, 0, abs(ai + aj) ** 2 / 2.0
        yield i, j, 1, abs(ai - aj) ** 2 / 2.0


def honest_measure(state: EncodingState, r: int, rng: np.random.Generator) -> DetectionRecord:
    """Project the photon onto the delay-r pairing at a random offset.

    Parity 0 is the (|i> + |j>)/sqrt(2) outcome (same-detector click),
    parity 1 the minus superposition; unpaired modes come back lost.
    """
    L = len(state)
    if not 1 <= r <= L - 1:
        raise ParameterError(f"delay r must be in [1, {L - 1}], got {r}")
    offset = int(rng.integers(r))
    u = float(rng.random())
    acc = 0.0
    for i, j, parity, prob in pairing_outcomes(state, r, offset):
        acc += prob
        if u < acc:
            return DetectionRecord(i, j, parity)
    return LOST


def run_honest_round(L: int, rng: np.random.Generator) -> RoundRecord:
    """One full honest round: fresh key, random delay, measure, sift."""
    key = generate_key_bits(L, rng)
    state = encode_state(key)
    r = int(rng.integers(1, L))
    det = honest_measure(state, r, rng)
    if det.lost:
        return RoundRecord(key, r, det, None, None)
    return RoundRecord(key, r, det, sift(key, det.i, det.j), det.parity)


@dataclass
class HonestStats:
    """Aggregate of repeated honest rounds."""

    L: int
    rounds: int
    announced: int
    losses: int
    errors: int
    qber: float
    round_log: list | None = None


def run_honest_session(L: int, rounds: int, rng: np.random.Generator,
                       keep_rounds: bool = False) -> HonestStats:
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    announced = losses = errors = 0
    log = [] if keep_rounds else None
    for k in range(rounds):
        rec = run_honest_round(L, rng)
        if rec.detection.lost:
            losses += 1
        else:
            announced += 1
            errors += int(rec.bob_sifted != rec.alice_sifted)
        if log is not None:
            det = rec.detection
            log.append({
                "round": k, "r": rec.r, "lost": int(det.lost),
                "i": -1 if det.lost else det.i, "j": -1 if det.lost else det.j,
                "alice": -1 if det.lost else rec.alice_sifted,
                "bob": -1 if det.lost else rec.bob_sifted,
            })
    qber = errors / announced if announced else 0.0
    return HonestStats(L, rounds, announced, losses, errors, qber, log)
