"""Pair-harvesting attack on multi-photon trains.

When a train of n pulses carries (n-1)/2 photons, an eavesdropper can
passively interfere each photon against a plain-phase reference and read
the relative phase of one uniformly random pulse pair per photon, with
zero disturbance (same-detector vs different-detector clicks decode the
parity exactly).  XOR transitivity chains the observed pairs into
connected components whose internal relative phases are then all known.
A compromised measurement device answers the receiver's delay queries
(i, j = i + r) from the largest component's difference table, so every
announced bit is simultaneously known to the eavesdropper and agrees
with Alice's sifted bit, and delays missing from the table are declared
losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ParityConflictError
from .protocol import LOST, DetectionRecord, KeyBits, generate_key_bits, sift

RESPOND_POLICIES = ("random", "first")


@dataclass(frozen=True)
class PairObservation:
    """One harvested relative phase: pulse pair (i, j) and parity s_i XOR s_j."""

    i: int
    j: int
    parity: int

    def __post_init__(self):
        if not 1 <= self.i < self.j:
            raise ParameterError(f"bad pair ({self.i}, {self.j})")
        if self.parity not in (0, 1):
            raise ParameterError("parity must be 0 or 1")


class PhaseGraph:
    """Parity-augmented union-find over pulse indices 1..n.

    Each node stores the parity of its phase relative to its parent, so
    find() returns (root, parity to root) and any two nodes in the same
    component have a well-defined relative phase.  Contradictory edges
    raise; honestly harvested edges can never contradict.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ParameterError("need at least one node")
        self.n = n
        self._parent = list(range(n + 1))
        self._rank = [0] * (n + 1)
        self._parity = [0] * (n + 1)
        self.edge_log: list[PairObservation] = []

    def find(self, x: int) -> tuple[int, int]:
        if not 1 <= x <= self.n:
            raise ParameterError(f"node {x} out of range 1..{self.n}")
        parent, par = self._parent, self._parity
        root, p = x, 0
        while parent[root] != root:
            p ^= par[root]
            root = parent[root]
        # path compression, re-pointing every node straight at the root
        node, node_p = x, p
        while parent[node] != node:
            nxt, nxt_p = parent[node], node_p ^ par[node]
            parent[node], par[node] = root, node_p
            node, node_p = nxt, nxt_p
        return root, p

    def add_edge(self, i: int, j: int, parity: int):
        if parity not in (0, 1):
            raise ParameterError("parity must be 0 or 1")
        ri, pi = self.find(i)
        rj, pj = self.find(j)
        if ri == rj:
            if pi ^ pj != parity:
                raise ParityConflictError(
                    f"pair ({i}, {j}) already implies parity {pi ^ pj}, got {parity}")
            return
        if self._rank[ri] < self._rank[rj]:
            ri, rj = rj, ri
        # attach rj under ri; parity chosen so that i-to-j parity holds
        self._parent[rj] = ri
        self._parity[rj] = pi ^ pj ^ parity
        if self._rank[ri] == self._rank[rj]:
            self._rank[ri] += 1

    def add(self, obs):
        if isinstance(obs, PairObservation):
            self.add_edge(obs.i, obs.j, obs.parity)
            self.edge_log.append(obs)
        else:
            i, j, parity = obs
            self.add_edge(int(i), int(j), int(parity))

    def query(self, u: int, v: int) -> int | None:
        """Relative phase s_u XOR s_v, or None if u, v are not connected."""
        ru, pu = self.find(u)
        rv, pv = self.find(v)
        if ru != rv:
            return None
        return pu ^ pv

    def components(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {}
        for node in range(1, self.n + 1):
            root, _ = self.find(node)
            groups.setdefault(root, []).append(node)
        return groups


@dataclass(frozen=True)
class ComponentInfo:
    """A connected component: sorted members and each member's parity
    relative to the representative (the smallest member)."""

    members: tuple[int, ...]
    phases: tuple[int, ...]
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.members or len(self.members) != len(self.phases):
            raise ParameterError("members and phases must align and be nonempty")
        if list(self.members) != sorted(self.members):
            raise ParameterError("members must be sorted")
        if self.phases[0] != 0:
            raise ParameterError("representative phase must be 0")
        object.__setattr__(self, "_lookup", dict(zip(self.members, self.phases)))

    @property
    def representative(self) -> int:
        return self.members[0]

    @property
    def size(self) -> int:
        return len(self.members)

    def phase(self, node: int) -> int:
        return self._lookup[node]


def passive_interference(key: KeyBits, rng: np.random.Generator) -> PairObservation:
    """Interfere one photon against a plain-phase reference.

    Idealised unit-efficiency optics: the photon reveals a uniformly
    random unordered pulse pair, and the detector pattern (same vs
    different detector) decodes its parity s_i XOR s_j exactly.
    """
    n = len(key)
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    lo, hi = (i, j) if i < j else (j, i)
    return PairObservation(lo + 1, hi + 1, int(key.bits[lo] ^ key.bits[hi]))


def harvest(key: KeyBits, photons: int | None, rng: np.random.Generator) -> list[PairObservation]:
    """Independent pair observations, one per photon (with replacement).

    ``photons=None`` uses the (n-1)/2 photons of a half-filled train and
    requires odd n.  Draws are vectorised but distributed identically to
    repeated ``passive_interference`` calls.
    """
    n = len(key)
    if photons is None:
        if n % 2 == 0:
            raise ParameterError(f"half-filled train needs odd n, got {n}")
        photons = (n - 1) // 2
    if photons < 1:
        raise ParameterError("need at least one photon")
    i = rng.integers(0, n, size=photons)
    j = rng.integers(0, n - 1, size=photons)
    j = j + (j >= i)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    parity = key.bits[lo] ^ key.bits[hi]
    return [PairObservation(int(a) + 1, int(b) + 1, int(p))
            for a, b, p in zip(lo, hi, parity)]


def build_phase_graph(observations, n: int) -> PhaseGraph:
    graph = PhaseGraph(n)
    for obs in observations:
        if isinstance(obs, PairObservation) and obs.j > n:
            raise ParameterError(f"observation {obs} exceeds n={n}")
        graph.add(obs)
    return graph


def largest_component(graph: PhaseGraph) -> ComponentInfo:
    """Maximum-cardinality component; ties go to the smallest representative."""
    groups = graph.components()
    best = None
    for members in groups.values():
        key = (-len(members), members[0])
        if best is None or key < best[0]:
            best = (key, members)
    members = sorted(best[1])
    rep_parity = graph.find(members[0])[1]
    phases = tuple(graph.find(m)[1] ^ rep_parity for m in members)
    return ComponentInfo(tuple(members), phases)


@dataclass
class DifferenceTable:
    """Pairwise differences of a component's members, binned by value.

    ``pairs`` maps each delay r to the ordered (a_i, a_j) pairs with
    a_j - a_i = r; built lazily since coverage alone only needs the set
    of distinct differences.
    """

    members: tuple[int, ...]
    n: int
    _delays: frozenset = field(init=False, repr=False)
    _pairs: dict | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.members:
            raise ParameterError("component must be nonempty")
        arr = np.asarray(self.members, dtype=np.int64)
        diffs = (arr[None, :] - arr[:, None])[np.triu_indices(arr.size, 1)]
        self._delays = frozenset(int(d) for d in np.unique(diffs))

    @property
    def pairs(self) -> dict[int, list[tuple[int, int]]]:
        if self._pairs is None:
            table: dict[int, list[tuple[int, int]]] = {}
            for a_idx, a in enumerate(self.members):
                for b in self.members[a_idx + 1:]:
                    table.setdefault(b - a, []).append((a, b))
            self._pairs = table
        return self._pairs

    @property
    def coverage(self) -> float:
        return len(self._delays) / (self.n - 1)

    def has_delay(self, r: int) -> bool:
        return r in self._delays


def difference_table(component: ComponentInfo, n: int) -> DifferenceTable:
    return DifferenceTable(component.members, n)


def fred_respond(table: DifferenceTable, phases: ComponentInfo, r: int,
                 rng: np.random.Generator, policy: str = "random") -> DetectionRecord:
    """Answer a delay query from the difference table, or declare loss.

    The pair among the candidates with difference r is picked uniformly
    at random by default, to avoid index bias; "first" is available for
    reproducibility checks.
    """
    if not 1 <= r <= table.n - 1:
        raise ParameterError(f"delay r must be in [1, {table.n - 1}], got {r}")
    if policy not in RESPOND_POLICIES:
        raise ParameterError(f"unknown policy {policy!r}")
    if not table.has_delay(r):
        return LOST
    candidates = table.pairs[r]
    if policy == "first":
        a, b = candidates[0]
    else:
        a, b = candidates[int(rng.integers(len(candidates)))]
    return DetectionRecord(a, b, phases.phase(a) ^ phases.phase(b))


@dataclass
class Attack1Stats:
    """Session aggregate for the pair-harvesting attack."""

    n: int
    rounds: int
    component_size: int
    coverage: float
    announced: int
    losses: int
    eve_correct: int
    qber: float
    policy: str
    round_log: list | None = None

    def __post_init__(self):
        if self.announced + self.losses != self.rounds:
            raise ParameterError("announced + losses must equal rounds")


def run_attack1_session(n: int, rounds: int, rng: np.random.Generator,
                        policy: str = "random", keep_rounds: bool = False) -> Attack1Stats:
    """One harvest plus ``rounds`` delay queries against a fresh key.

    Per round the receiver draws r uniformly from 1..n-1; the device
    answers from the difference table or declares loss.  Eve rebuilds
    the announced parity from her own copy of the component phases, and
    both her bit and the announced bit are checked against Alice's true
    sifted bit.
    """
    if n < 3 or n % 2 == 0:
        raise ParameterError(f"n must be odd and >= 3, got {n}")
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    key = generate_key_bits(n, rng)
    graph = build_phase_graph(harvest(key, None, rng), n)
    component = largest_component(graph)
    table = difference_table(component, n)

    announced = losses = errors = eve_correct = 0
    log = [] if keep_rounds else None
    for k in range(rounds):
        r = 1 + int(rng.integers(n - 1))
        det = fred_respond(table, component, r, rng, policy)
        if det.lost:
            losses += 1
            row_i = row_j = alice = bob = eve = -1
        else:
            announced += 1
            alice = sift(key, det.i, det.j)
            bob = det.parity
            eve = component.phase(det.i) ^ component.phase(det.j)
            errors += int(bob != alice)
            eve_correct += int(eve == alice)
            row_i, row_j = det.i, det.j
        if log is not None:
            log.append({"round": k, "r": r, "lost": int(det.lost),
                        "i": row_i, "j": row_j,
                        "alice": alice, "bob": bob, "eve": eve})
    qber = errors / announced if announced else 0.0
    return Attack1Stats(n, rounds, component.size, table.coverage,
                        announced, losses, eve_correct, qber, policy, log)
