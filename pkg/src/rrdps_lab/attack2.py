"""Index-entangling ancilla attack on single-photon trains.

The eavesdropper maps each pulse mode |k> of Alice's photon onto a
correlated ancilla mode, |k> -> |k>_A |k>_E, keeps the photon in quantum
memory and forwards the ancilla to the compromised measurement device.
The device resolves the ancilla into one (i, i+r) pair of the round's
delay pairing and reads the pair's plus/minus interference sign; on plus
it announces (i, j) with a uniformly random key bit, on minus it
declares loss.  The retained photon then collapses onto the same pair,
still carrying Alice's phases, so the eavesdropper reads the sifted bit
s_i XOR s_j with certainty.  Against uniform keys the attack costs 50%
loss and produces 50% errors on announced rounds; mixing it with honest
behaviour halves the error rate at the price of halving Eve's coverage.

The pair resolution is modelled at unit efficiency: the measurement
always lands on some pair of the drawn pairing (amplitude-weighted),
matching a device that never wastes a query, while the plus/minus
post-selection carries all of the announced/lost statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError, StateError
from .protocol import (
    LOST,
    DetectionRecord,
    EncodingState,
    disjoint_pairing,
    encode_state,
    generate_key_bits,
    honest_measure,
    sift,
)


@dataclass
class JointState:
    """Photon-ancilla state in Schmidt form: amplitude c_k on |k>_A |k>_E."""

    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.ndim != 1 or self.amps.size < 2:
            raise ParameterError("need at least 2 correlated modes")
        norm = float(np.sum(np.abs(self.amps) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ParameterError(f"joint state norm {norm!r} is not 1")

    def __len__(self) -> int:
        return int(self.amps.size)


@dataclass(frozen=True)
class ResidualState:
    """Photon state retained by Eve after an announced round: the two
    surviving mode indices and their binary relative phase (0 = plus)."""

    i: int
    j: int
    rel_phase: int

    def __post_init__(self):
        if not 1 <= self.i < self.j:
            raise ParameterError(f"bad residual pair ({self.i}, {self.j})")
        if self.rel_phase not in (0, 1):
            raise ParameterError("rel_phase must be 0 or 1")


@dataclass
class Attack2Stats:
    """Session aggregate; eve_correct is counted over attacked announced
    rounds only."""

    L: int
    rounds: int
    announced: int
    losses: int
    attacked_announced: int
    eve_correct: int
    qber: float
    mix_prob: float
    round_log: list | None = None

    def __post_init__(self):
        if self.announced + self.losses != self.rounds:
            raise ParameterError("announced + losses must equal rounds")

    @property
    def loss_rate(self) -> float:
        return self.losses / self.rounds


def entangle(state: EncodingState) -> JointState:
    """Copy each photon amplitude onto its correlated ancilla mode."""
    return JointState(state.amplitudes.copy())


@lru_cache(maxsize=None)
def _usable_offsets(L: int, r: int) -> tuple[int, ...]:
    # offset 0 always pairs (1, 1+r), so this is never empty
    return tuple(o for o in range(r) if disjoint_pairing(L, r, o))


def pair_resolution_distribution(joint: JointState, r: int):
    """Exact outcome distribution of the device's ancilla measurement.

    Yields (offset, i, j, sign, probability) over usable pairing offsets
    (drawn uniformly), pairs (amplitude-weighted within the offset) and
    interference signs (+1 announces, -1 is loss).
    """
    L = len(joint)
    if not 1 <= r <= L - 1:
        raise ParameterError(f"delay r must be in [1, {L - 1}], got {r}")
    offsets = _usable_offsets(L, r)
    c = joint.amps
    for offset in offsets:
        pairs = disjoint_pairing(L, r, offset)
        weights = [abs(c[i - 1]) ** 2 + abs(c[j - 1]) ** 2 for i, j in pairs]
        total = sum(weights)
        if total <= 0.0:
            continue
        for (i, j), w in zip(pairs, weights):
            if w <= 0.0:
                continue
            ci, cj = c[i - 1], c[j - 1]
            p_plus = abs(ci + cj) ** 2 / (2.0 * w)
            base = w / (total * len(offsets))
            yield offset, i, j, +1, base * p_plus
            yield offset, i, j, -1, base * (1.0 - p_plus)


def fred_measure_ancilla(joint: JointState, r: int, rng: np.random.Generator):
    """Resolve the ancilla into a delay-r pair and post-select the sign.

    Returns (residual, announcement).  On a plus outcome the residual
    records the collapsed photon pair and its relative phase, and the
    announcement carries the device's uniformly random key bit for the
    receiver; on minus (or an ancilla with no support on any pair) the
    round is lost and the residual is None.
    """
    L = len(joint)
    if not 1 <= r <= L - 1:
        raise ParameterError(f"delay r must be in [1, {L - 1}], got {r}")
    offsets = _usable_offsets(L, r)
    offset = offsets[int(rng.integers(len(offsets)))]
    pairs = disjoint_pairing(L, r, offset)
    c = joint.amps
    weights = [abs(c[i - 1]) ** 2 + abs(c[j - 1]) ** 2 for i, j in pairs]
    total = sum(weights)
    if total <= 0.0:
        return None, LOST
    u = float(rng.random()) * total
    acc = 0.0
    i = j = None
    w = 0.0
    for (pi, pj), pw in zip(pairs, weights):
        acc += pw
        if u < acc:
            i, j, w = pi, pj, pw
            break
    if i is None:
        i, j = pairs[-1]
        w = weights[-1]
    ci, cj = c[i - 1], c[j - 1]
    p_plus = abs(ci + cj) ** 2 / (2.0 * w)
    if float(rng.random()) < p_plus:
        rel = 0 if (ci * cj.conjugate()).real >= 0.0 else 1
        residual = ResidualState(i, j, rel)
        return residual, DetectionRecord(i, j, int(rng.integers(2)))
    return None, LOST


def eve_extract(residual: ResidualState | None) -> int:
    """Read the retained pair's relative phase; equals s_i XOR s_j."""
    if residual is None:
        raise StateError("no residual state on a lost round")
    return residual.rel_phase


def run_attack2_session(L: int, rounds: int, mix_prob: float,
                        rng: np.random.Generator,
                        keep_rounds: bool = False) -> Attack2Stats:
    """Mixture session: each round is attacked with probability mix_prob,
    otherwise the device measures the photon honestly (zero error)."""
    if L < 2:
        raise ParameterError(f"L must be >= 2, got {L}")
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    if not 0.0 <= mix_prob <= 1.0:
        raise ParameterError(f"mix_prob must be in [0, 1], got {mix_prob}")
    announced = losses = errors = attacked_announced = eve_correct = 0
    log = [] if keep_rounds else None
    for k in range(rounds):
        key = generate_key_bits(L, rng)
        r = int(rng.integers(1, L))
        attacked = float(rng.random()) < mix_prob
        state = encode_state(key)
        alice = bob = eve = -1
        if attacked:
            residual, det = fred_measure_ancilla(entangle(state), r, rng)
            if det.lost:
                losses += 1
            else:
                announced += 1
                attacked_announced += 1
                alice = sift(key, det.i, det.j)
                bob = det.parity
                eve = eve_extract(residual)
                errors += int(bob != alice)
                eve_correct += int(eve == alice)
        else:
            det = honest_measure(state, r, rng)
            if det.lost:
                losses += 1
            else:
                announced += 1
                alice = sift(key, det.i, det.j)
                bob = det.parity
                errors += int(bob != alice)
        if log is not None:
            log.append({"round": k, "r": r, "attacked": int(attacked),
                        "lost": int(det.lost),
                        "i": -1 if det.lost else det.i,
                        "j": -1 if det.lost else det.j,
                        "alice": alice, "bob": bob, "eve": eve})
    qber = errors / announced if announced else 0.0
    return Attack2Stats(L, rounds, announced, losses, attacked_announced,
                        eve_correct, qber, mix_prob, log)
