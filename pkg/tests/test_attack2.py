import math
from collections import Counter

import numpy as np
import pytest

from rrdps_lab import (
    JointState,
    KeyBits,
    ResidualState,
    encode_state,
    entangle,
    eve_extract,
    fred_measure_ancilla,
    make_rng,
    run_attack2_session,
    sift,
)
from rrdps_lab.attack2 import pair_resolution_distribution
from rrdps_lab.errors import ParameterError, StateError
from rrdps_lab.protocol import disjoint_pairing


def oracle_distribution(key, r):
    """Independent enumeration of the device's outcome distribution.

    Outcomes are ('announce', i, j) and ('lost',); offsets with at least
    one pair are drawn uniformly, pairs by their amplitude weight, and
    the plus branch by |c_i + c_j|^2 / (2 w).
    """
    L = len(key)
    c = encode_state(key).amplitudes
    offsets = [o for o in range(r) if disjoint_pairing(L, r, o)]
    dist = Counter()
    for off in offsets:
        pairs = disjoint_pairing(L, r, off)
        weights = [abs(c[i - 1]) ** 2 + abs(c[j - 1]) ** 2 for i, j in pairs]
        total = sum(weights)
        for (i, j), w in zip(pairs, weights):
            p_pair = w / total / len(offsets)
            p_plus = abs(c[i - 1] + c[j - 1]) ** 2 / (2 * w)
            dist[("announce", i, j)] += p_pair * p_plus
            dist[("lost",)] += p_pair * (1 - p_plus)
    return dist


def all_keys(L):
    for value in range(2 ** L):
        yield KeyBits([(value >> k) & 1 for k in range(L)])


class TestEntangle:
    def test_bell_like_two_modes(self):
        joint = entangle(encode_state(KeyBits([0, 0])))
        np.testing.assert_allclose(joint.amps, np.ones(2) / np.sqrt(2))

    def test_three_mode_signs(self):
        joint = entangle(encode_state(KeyBits([0, 1, 0])))
        np.testing.assert_allclose(joint.amps, np.array([1, -1, 1]) / np.sqrt(3))

    def test_norm_preserved(self):
        for key in all_keys(5):
            joint = entangle(encode_state(key))
            assert abs(np.sum(np.abs(joint.amps) ** 2) - 1.0) <= 1e-12

    def test_photon_reduced_state_maximally_mixed(self):
        # dense oracle: build the full L*L joint vector, trace the ancilla
        rng = make_rng(2)
        for L in range(2, 9):
            key = KeyBits(rng.integers(0, 2, size=L))
            joint = entangle(encode_state(key))
            full = np.zeros((L, L), dtype=complex)
            for k, amp in enumerate(joint.amps):
                full[k, k] = amp
            vec = full.reshape(-1)
            rho = np.outer(vec, vec.conj()).reshape(L, L, L, L)
            rho_photon = np.trace(rho, axis1=1, axis2=3)
            np.testing.assert_allclose(rho_photon, np.eye(L) / L, atol=1e-12)


class TestFredMeasureAncilla:
    def test_aligned_pair_always_announced(self):
        # L=2, equal bits: plus outcome certain, receiver bit a fair coin
        joint = entangle(encode_state(KeyBits([0, 0])))
        rng = make_rng(3)
        bits = set()
        for _ in range(300):
            residual, det = fred_measure_ancilla(joint, 1, rng)
            assert not det.lost
            assert (det.i, det.j) == (1, 2)
            assert residual == ResidualState(1, 2, 0)
            bits.add(det.parity)
        assert bits == {0, 1}

    def test_antialigned_pair_always_lost(self):
        joint = entangle(encode_state(KeyBits([0, 1])))
        rng = make_rng(4)
        for _ in range(300):
            residual, det = fred_measure_ancilla(joint, 1, rng)
            assert det.lost and residual is None

    def test_loss_is_half_over_uniform_keys(self):
        rng = make_rng(5)
        rounds = 20_000
        lost = 0
        for _ in range(rounds):
            key = KeyBits(rng.integers(0, 2, size=6))
            _, det = fred_measure_ancilla(entangle(encode_state(key)),
                                          int(rng.integers(1, 6)), rng)
            lost += det.lost
        assert abs(lost / rounds - 0.5) < 0.02

    def test_distribution_matches_oracle_L4(self):
        # all 16 keys and every delay, sampled against exact enumeration
        draws = 4000
        for key in all_keys(4):
            joint = entangle(encode_state(key))
            for r in (1, 2, 3):
                oracle = oracle_distribution(key, r)
                rng = make_rng(1000 + int(key.bits @ (1 << np.arange(4))), r)
                counts = Counter()
                for _ in range(draws):
                    _, det = fred_measure_ancilla(joint, r, rng)
                    counts[("lost",) if det.lost
                           else ("announce", det.i, det.j)] += 1
                tv = 0.5 * sum(abs(counts.get(k, 0) / draws - p)
                               for k, p in oracle.items())
                tv += 0.5 * sum(counts[k] / draws for k in counts if k not in oracle)
                assert tv < 0.05

    @pytest.mark.slow
    @pytest.mark.parametrize("L", [2, 3, 4, 5, 6])
    def test_distribution_total_variation_100k(self, L):
        rng_key = make_rng(40 + L)
        key = KeyBits(rng_key.integers(0, 2, size=L))
        r = int(rng_key.integers(1, L))
        oracle = oracle_distribution(key, r)
        joint = entangle(encode_state(key))
        rng = make_rng(50 + L)
        draws = 100_000
        counts = Counter()
        for _ in range(draws):
            _, det = fred_measure_ancilla(joint, r, rng)
            counts[("lost",) if det.lost else ("announce", det.i, det.j)] += 1
        tv = 0.5 * sum(abs(counts.get(k, 0) / draws - oracle.get(k, 0.0))
                       for k in set(counts) | set(oracle))
        assert tv < 0.01

    def test_exact_distribution_helper_matches_oracle(self):
        # the library's enumeration helper agrees with the independent one
        for key in all_keys(4):
            joint = entangle(encode_state(key))
            for r in (1, 2, 3):
                want = oracle_distribution(key, r)
                got = Counter()
                for off, i, j, sign, prob in pair_resolution_distribution(joint, r):
                    if sign > 0:
                        got[("announce", i, j)] += prob
                    else:
                        got[("lost",)] += prob
                for k in set(want) | set(got):
                    assert abs(got.get(k, 0.0) - want.get(k, 0.0)) < 1e-12

    def test_announced_rounds_have_aligned_bits(self):
        # plus outcomes only occur where s_i == s_j, so the oracle mass of
        # announcements sits entirely on parity-0 pairs
        for key in all_keys(5):
            for r in range(1, 5):
                for outcome, prob in oracle_distribution(key, r).items():
                    if outcome[0] == "announce" and prob > 1e-12:
                        assert sift(key, outcome[1], outcome[2]) == 0

    def test_rejects_bad_delay(self):
        joint = entangle(encode_state(KeyBits([0, 0, 0])))
        with pytest.raises(ParameterError):
            fred_measure_ancilla(joint, 3, make_rng(0))


class TestEveExtract:
    def test_readout(self):
        assert eve_extract(ResidualState(1, 2, 0)) == 0
        assert eve_extract(ResidualState(2, 5, 1)) == 1

    def test_lost_round_raises(self):
        with pytest.raises(StateError):
            eve_extract(None)

    def test_eve_equals_alice_on_every_announced_round(self):
        rng = make_rng(7)
        announced = 0
        for _ in range(10_000):
            key = KeyBits(rng.integers(0, 2, size=5))
            r = int(rng.integers(1, 5))
            residual, det = fred_measure_ancilla(entangle(encode_state(key)), r, rng)
            if not det.lost:
                announced += 1
                assert eve_extract(residual) == sift(key, det.i, det.j)
        assert announced > 3000


class TestAttack2Session:
    @pytest.mark.slow
    def test_pure_attack_statistics(self):
        stats = run_attack2_session(5, 100_000, 1.0, make_rng(2024))
        assert abs(stats.qber - 0.5) <= 0.01
        assert abs(stats.loss_rate - 0.5) <= 0.01
        assert stats.eve_correct == stats.attacked_announced

    @pytest.mark.slow
    def test_half_mixture_statistics(self):
        stats = run_attack2_session(5, 100_000, 0.5, make_rng(3024))
        assert abs(stats.qber - 0.25) <= 0.01
        assert stats.eve_correct == stats.attacked_announced

    def test_no_attack_reduces_to_honest(self):
        stats = run_attack2_session(5, 20_000, 0.0, make_rng(8))
        assert stats.qber == 0.0
        assert stats.attacked_announced == 0
        # loss equals the honest pairing loss, computed from the pairing
        # tables directly (offsets drawn per delay, delays equally likely)
        per_r = [np.mean([2 * len(disjoint_pairing(5, r, off)) / 5
                          for off in range(r)]) for r in range(1, 5)]
        loss_expected = 1.0 - float(np.mean(per_r))
        sigma = math.sqrt(loss_expected * (1 - loss_expected) / stats.rounds)
        assert abs(stats.loss_rate - loss_expected) < 5 * sigma

    @pytest.mark.slow
    def test_receiver_bit_independent_of_alice(self):
        # empirical mutual information between the announced bit and
        # Alice's sifted bit under the pure attack
        stats = run_attack2_session(5, 100_000, 1.0, make_rng(9), keep_rounds=True)
        joint = np.zeros((2, 2))
        for row in stats.round_log:
            if not row["lost"]:
                joint[row["bob"], row["alice"]] += 1
        joint /= joint.sum()
        px = joint.sum(axis=1)
        py = joint.sum(axis=0)
        mi = 0.0
        for a in range(2):
            for b in range(2):
                if joint[a, b] > 0 and px[a] > 0 and py[b] > 0:
                    mi += joint[a, b] * math.log2(joint[a, b] / (px[a] * py[b]))
        assert mi < 0.01

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            run_attack2_session(1, 10, 1.0, make_rng(0))
        with pytest.raises(ParameterError):
            run_attack2_session(5, 0, 1.0, make_rng(0))
        with pytest.raises(ParameterError):
            run_attack2_session(5, 10, 1.5, make_rng(0))

    def test_counts_are_consistent(self):
        stats = run_attack2_session(4, 5000, 0.7, make_rng(10))
        assert stats.announced + stats.losses == stats.rounds
        assert stats.attacked_announced <= stats.announced
        assert stats.eve_correct == stats.attacked_announced


class TestJointState:
    def test_rejects_non_normalised(self):
        with pytest.raises(ParameterError):
            JointState(np.array([1.0, 1.0]))
