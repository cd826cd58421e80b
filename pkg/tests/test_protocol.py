import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from rrdps_lab import (
    DetectionRecord,
    EncodingState,
    KeyBits,
    disjoint_pairing,
    encode_state,
    generate_key_bits,
    honest_measure,
    make_rng,
    run_honest_round,
    run_honest_session,
    sift,
)
from rrdps_lab.errors import ParameterError
from rrdps_lab.protocol import pairing_outcomes


def dense_outcome_probs(amps, L, r, offset):
    """Oracle: Born probabilities from explicit projector matrices."""
    outcomes = []
    covered = np.zeros(L, dtype=bool)
    for i, j in disjoint_pairing(L, r, offset):
        covered[i - 1] = covered[j - 1] = True
        for parity, sign in ((0, 1.0), (1, -1.0)):
            v = np.zeros(L, dtype=complex)
            v[i - 1] = 1.0
            v[j - 1] = sign
            v /= np.sqrt(2.0)
            proj = np.outer(v, v.conj())
            outcomes.append((i, j, parity, float((amps.conj() @ proj @ amps).real)))
    lost = float(sum(abs(amps[k]) ** 2 for k in range(L) if not covered[k]))
    return outcomes, lost


class TestGenerateKeyBits:
    def test_deterministic_given_seed(self):
        a = generate_key_bits(3, make_rng(42))
        b = generate_key_bits(3, make_rng(42))
        assert a == b
        assert len(a) == 3

    def test_minimum_size(self):
        assert len(generate_key_bits(2, make_rng(0))) == 2

    def test_rejects_small_L(self):
        with pytest.raises(ParameterError):
            generate_key_bits(1, make_rng(0))

    def test_bit_mean_is_half(self):
        rng = make_rng(7)
        total = sum(int(generate_key_bits(10, rng).bits.sum()) for _ in range(100_000))
        mean = total / 1_000_000
        assert abs(mean - 0.5) < 0.01


class TestEncodeState:
    def test_all_zero_phases(self):
        state = encode_state(KeyBits([0, 0, 0]))
        np.testing.assert_allclose(state.amplitudes, np.ones(3) / np.sqrt(3))

    def test_single_flip(self):
        state = encode_state(KeyBits([0, 1]))
        np.testing.assert_allclose(state.amplitudes, np.array([1, -1]) / np.sqrt(2))

    def test_direct_formula(self):
        state = encode_state(KeyBits([1, 0, 1, 1]))
        np.testing.assert_allclose(state.amplitudes, np.array([-1, 1, -1, -1]) / 2.0)

    @given(bits=st.lists(st.integers(0, 1), min_size=2, max_size=16))
    def test_unit_norm(self, bits):
        state = encode_state(KeyBits(bits))
        assert abs(np.sum(np.abs(state.amplitudes) ** 2) - 1.0) <= 1e-12

    def test_rejects_non_normalised(self):
        with pytest.raises(ParameterError):
            EncodingState(np.array([1.0, 1.0]))


class TestSift:
    @pytest.mark.parametrize("bits,i,j,expected", [
        ([0, 1, 1], 1, 2, 1),
        ([0, 1, 1], 2, 3, 0),
        ([1, 0, 1, 1], 1, 4, 0),
    ])
    def test_xor(self, bits, i, j, expected):
        assert sift(KeyBits(bits), i, j) == expected

    def test_rejects_bad_indices(self):
        key = KeyBits([0, 1, 0])
        for i, j in ((0, 2), (2, 2), (1, 4), (3, 1)):
            with pytest.raises(ParameterError):
                sift(key, i, j)


class TestDisjointPairing:
    @given(L=st.integers(2, 40), r=st.integers(1, 39), offset=st.integers(0, 10))
    def test_pairs_disjoint_and_at_delay(self, L, r, offset):
        if r > L - 1:
            r = L - 1
        pairs = disjoint_pairing(L, r, offset)
        seen = set()
        for i, j in pairs:
            assert j - i == r
            assert 1 <= i < j <= L
            assert i not in seen and j not in seen
            seen.update((i, j))

    def test_unpaired_fraction_vanishes(self):
        # at most ~2r boundary indices stay unpaired for any offset
        for L in (100, 1000):
            for r in (1, 2, 5):
                for offset in range(r):
                    covered = 2 * len(disjoint_pairing(L, r, offset))
                    assert L - covered <= 2 * r + offset

    def test_rejects_bad_delay(self):
        with pytest.raises(ParameterError):
            disjoint_pairing(5, 5)
        with pytest.raises(ParameterError):
            disjoint_pairing(5, 0)


class TestHonestMeasure:
    def test_aligned_bits_always_plus(self):
        state = encode_state(KeyBits([0, 0]))
        rng = make_rng(3)
        for _ in range(200):
            det = honest_measure(state, 1, rng)
            assert det == DetectionRecord(1, 2, 0)

    def test_antialigned_bits_always_minus(self):
        state = encode_state(KeyBits([0, 1]))
        rng = make_rng(4)
        for _ in range(200):
            det = honest_measure(state, 1, rng)
            assert det == DetectionRecord(1, 2, 1)

    def test_rejects_bad_delay(self):
        state = encode_state(KeyBits([0, 0, 0]))
        with pytest.raises(ParameterError):
            honest_measure(state, 3, make_rng(0))

    def test_completeness_every_L_r_offset(self):
        # projector weights plus loss mass must sum to 1 for any state
        rng = make_rng(11)
        for L in range(2, 9):
            raw = rng.standard_normal(L) + 1j * rng.standard_normal(L)
            amps = raw / np.linalg.norm(raw)
            state = EncodingState(amps)
            for r in range(1, L):
                for offset in range(r):
                    total = sum(p for *_, p in pairing_outcomes(state, r, offset))
                    _, lost = dense_outcome_probs(amps, L, r, offset)
                    assert abs(total + lost - 1.0) <= 1e-12

    def test_exhaustive_parity_correctness(self):
        # every positive-probability detection outcome carries s_i ^ s_j,
        # for all keys, delays and offsets up to L = 8
        for L in range(2, 9):
            for value in range(2 ** L):
                bits = [(value >> k) & 1 for k in range(L)]
                key = KeyBits(bits)
                amps = encode_state(key).amplitudes
                for r in range(1, L):
                    for offset in range(r):
                        outcomes, lost = dense_outcome_probs(amps, L, r, offset)
                        for i, j, parity, prob in outcomes:
                            if prob > 1e-12:
                                assert parity == sift(key, i, j)
                        total = sum(p for *_, p in outcomes) + lost
                        assert abs(total - 1.0) <= 1e-12

    def test_sampled_statistics_match_oracle(self):
        # L=6, r=2: detection rate equals the oracle pairing fraction and
        # every sampled parity is correct
        key = KeyBits([0, 1, 1, 0, 1, 0])
        state = encode_state(key)
        amps = state.amplitudes
        expected_detect = np.mean([
            sum(p for *_, p in dense_outcome_probs(amps, 6, 2, off)[0])
            for off in range(2)
        ])
        rng = make_rng(12)
        rounds = 100_000
        detected = 0
        for _ in range(rounds):
            det = honest_measure(state, 2, rng)
            if not det.lost:
                detected += 1
                assert det.parity == sift(key, det.i, det.j)
        assert abs(detected / rounds - expected_detect) < 0.01


class TestRunHonestRound:
    def test_sifted_bits_agree(self):
        rng = make_rng(21)
        for _ in range(3000):
            rec = run_honest_round(5, rng)
            if not rec.detection.lost:
                assert rec.alice_sifted == rec.bob_sifted

    def test_session_qber_zero(self):
        stats = run_honest_session(5, 10_000, make_rng(22))
        assert stats.errors == 0
        assert stats.qber == 0.0

    def test_delays_uniform(self):
        rng = make_rng(23)
        counts = np.zeros(4, dtype=int)
        for _ in range(10_000):
            counts[run_honest_round(5, rng).r - 1] += 1
        assert chisquare(counts).pvalue > 1e-4

    def test_determinism(self):
        def trace(seed):
            rng = make_rng(seed)
            out = []
            for _ in range(200):
                rec = run_honest_round(6, rng)
                det = rec.detection
                out.append((tuple(rec.key_bits.bits), rec.r, det.i, det.j,
                            det.parity, det.lost, rec.alice_sifted, rec.bob_sifted))
            return out
        assert trace(99) == trace(99)
