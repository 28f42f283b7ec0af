"""Fusion-center collection, stacking, and batch serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from censorcs.censor import (
    CensorConfig,
    Decision,
    Thresholds,
    compute_thresholds,
    overlap_priors,
    q_func,
)
from censorcs.fusion import (
    FusionBatch,
    calibrated_epsilon,
    collect,
    epsilon_policy,
    from_text,
    stack_operator,
    to_text,
)
from censorcs.model import (
    ModelParams,
    SensingVector,
    draw_sensing_vector,
    substream,
)

PARAMS = ModelParams(n=12, k=2, k_c=4, sigma_s=1.0, sigma_v=0.2, m=6)


def make_vectors(seed: int, count: int, params: ModelParams = PARAMS):
    return [
        draw_sensing_vector(params, substream(seed, 0, i + 1)) for i in range(count)
    ]


def make_batch(seed: int = 1):
    vectors = make_vectors(seed, 6)
    decisions = [
        Decision.send_value(0.75),
        Decision.hard_zero(),
        Decision.silent(),
        Decision.send_value(-1.5),
        Decision.silent(),
        Decision.hard_zero(),
    ]
    return collect(decisions, vectors), vectors


class TestCollect:
    def test_partitions_and_aligns(self):
        batch, vectors = make_batch()
        assert batch.n == PARAMS.n and batch.num_nodes == 6
        assert batch.send_nodes.tolist() == [0, 3]
        assert batch.hard_nodes.tolist() == [1, 5]
        assert batch.num_silent == 2 and batch.num_active == 4
        assert batch.sent_values.tolist() == [0.75, -1.5]
        assert np.array_equal(batch.sent_rows[0], vectors[0].to_dense())
        assert np.array_equal(batch.sent_rows[1], vectors[3].to_dense())
        assert np.array_equal(batch.hard_rows[1], vectors[5].to_dense())

    def test_length_mismatch_rejected(self):
        vectors = make_vectors(1, 3)
        with pytest.raises(ValueError):
            collect([Decision.silent()] * 2, vectors)

    def test_all_silent_batch_is_legal(self):
        vectors = make_vectors(2, 3)
        batch = collect([Decision.silent()] * 3, vectors)
        assert batch.num_active == 0
        assert batch.sent_rows.shape == (0, PARAMS.n)
        assert batch.hard_rows.shape == (0, PARAMS.n)


class TestBatchValidation:
    def test_overlapping_groups_rejected(self):
        with pytest.raises(ValueError):
            FusionBatch(
                n=4, num_nodes=3,
                send_nodes=np.array([1]), hard_nodes=np.array([1]),
                sent_values=np.array([0.5]),
                sent_rows=np.zeros((1, 4)), hard_rows=np.zeros((1, 4)),
            )

    def test_descending_ids_rejected(self):
        with pytest.raises(ValueError):
            FusionBatch(
                n=4, num_nodes=5,
                send_nodes=np.array([3, 1]), hard_nodes=np.array([], dtype=np.int64),
                sent_values=np.array([0.5, 0.25]),
                sent_rows=np.zeros((2, 4)), hard_rows=np.zeros((0, 4)),
            )

    def test_out_of_range_ids_rejected(self):
        with pytest.raises(ValueError):
            FusionBatch(
                n=4, num_nodes=2,
                send_nodes=np.array([2]), hard_nodes=np.array([], dtype=np.int64),
                sent_values=np.array([0.5]),
                sent_rows=np.zeros((1, 4)), hard_rows=np.zeros((0, 4)),
            )

    def test_nonfinite_values_rejected(self):
        with pytest.raises(ValueError):
            FusionBatch(
                n=4, num_nodes=2,
                send_nodes=np.array([0]), hard_nodes=np.array([], dtype=np.int64),
                sent_values=np.array([np.nan]),
                sent_rows=np.zeros((1, 4)), hard_rows=np.zeros((0, 4)),
            )


class TestStackedOperator:
    def test_identity_over_weighted_hard_rows(self):
        batch, _ = make_batch()
        op = stack_operator(batch, weight=2.5)
        assert op.matrix.shape == (PARAMS.n + batch.num_hard, PARAMS.n)
        assert np.array_equal(op.matrix[: PARAMS.n], np.eye(PARAMS.n))
        assert np.array_equal(op.matrix[PARAMS.n :], 2.5 * batch.hard_rows)
        assert op.n == PARAMS.n

    def test_smallest_singular_value_at_least_one(self):
        for seed in range(5):
            batch, _ = make_batch(seed)
            op = stack_operator(batch, weight=1.0)
            smallest = np.linalg.svd(op.matrix, compute_uv=False)[-1]
            assert smallest >= 1.0 - 1e-12

    def test_weight_validation(self):
        batch, _ = make_batch()
        with pytest.raises(ValueError):
            stack_operator(batch, weight=-1.0)
        with pytest.raises(ValueError):
            stack_operator(batch, weight=np.inf)


class TestEpsilonPolicy:
    def test_rms_noise_formula(self):
        assert epsilon_policy(9, PARAMS) == pytest.approx(
            PARAMS.sigma_v * np.sqrt(PARAMS.k_c * 9)
        )
        assert epsilon_policy(0, PARAMS) == 0.0
        with pytest.raises(ValueError):
            epsilon_policy(-1, PARAMS)


def synthetic_batch(num_send, num_hard, sent_values, n=12, num_nodes=None):
    """Batch with the given payload counts; rows are placeholders.

    ``calibrated_epsilon`` reads only the sent values and the group sizes,
    so zero rows keep these numerical tests independent of pattern draws.
    """
    if num_nodes is None:
        num_nodes = num_send + num_hard
    return FusionBatch(
        n=n,
        num_nodes=num_nodes,
        send_nodes=np.arange(num_send, dtype=np.int64),
        hard_nodes=np.arange(num_send, num_send + num_hard, dtype=np.int64),
        sent_values=np.asarray(sent_values, dtype=np.float64),
        sent_rows=np.zeros((num_send, n)),
        hard_rows=np.zeros((num_hard, n)),
    )


class TestCalibratedEpsilon:
    def test_no_signal_reduces_to_value_norm(self):
        # with sigma_s = 0 every sent value is pure noise, so the posterior
        # noise energy is the value itself and zero rows hide nothing
        params = ModelParams(n=12, k=2, k_c=4, sigma_s=0.0, sigma_v=0.3, m=5)
        thresholds = Thresholds(lower=0.1, upper=0.5)
        batch = synthetic_batch(3, 2, [0.6, -0.9, 1.4])
        expected = np.linalg.norm(batch.sent_values)
        for include in (True, False):
            got = calibrated_epsilon(batch, thresholds, params, include)
            assert got == pytest.approx(expected, rel=1e-12)

    def test_empty_batch_gives_zero(self):
        thresholds = Thresholds(lower=0.1, upper=0.5)
        batch = synthetic_batch(0, 0, [], num_nodes=4)
        assert calibrated_epsilon(batch, thresholds, PARAMS) == 0.0

    def test_hard_rows_only_enlarge_the_radius(self):
        thresholds = Thresholds(lower=0.25, upper=0.8)
        batch = synthetic_batch(2, 3, [1.0, -2.0])
        with_hard = calibrated_epsilon(batch, thresholds, PARAMS, True)
        without = calibrated_epsilon(batch, thresholds, PARAMS, False)
        assert with_hard > without > 0.0

    def test_empty_hard_region_leaks_nothing(self):
        thresholds = Thresholds(lower=0.0, upper=0.8)
        batch = synthetic_batch(2, 3, [1.0, -2.0])
        assert calibrated_epsilon(batch, thresholds, PARAMS, True) == pytest.approx(
            calibrated_epsilon(batch, thresholds, PARAMS, False), rel=1e-12
        )

    def test_leak_term_matches_quadrature(self):
        # single-overlap model: the expected squared leakage of a row whose
        # measurement landed inside the hard region, by 2-D integration over
        # (signal part, noise part)
        params = ModelParams(n=12, k=1, k_c=4, sigma_s=1.1, sigma_v=0.6, m=4)
        cut = 0.8
        thresholds = Thresholds(lower=cut, upper=1.6)
        var_g = params.sigma_s**2
        var_w = params.k_c * params.sigma_v**2
        p_empty, p_occupied = overlap_priors(params)

        sd_g, sd_w = np.sqrt(var_g), np.sqrt(var_w)

        def density_g(g):
            return np.exp(-0.5 * g**2 / var_g) / (sd_g * np.sqrt(2 * np.pi))

        def noise_inside(g):
            # P(|g + w| < cut) for the noise part alone, in closed form
            return q_func((-cut - g) / sd_w) - q_func((cut - g) / sd_w)

        lim = 10 * sd_g
        inside, _ = integrate.quad(
            lambda g: density_g(g) * noise_inside(g), -lim, lim
        )
        leak, _ = integrate.quad(
            lambda g: g**2 * density_g(g) * noise_inside(g), -lim, lim
        )
        hard_mass = p_empty * (1 - 2 * q_func(cut / np.sqrt(var_w))) + p_occupied * inside
        per_row = p_occupied * leak / hard_mass

        batch = synthetic_batch(0, 3, [])
        got = calibrated_epsilon(batch, thresholds, params, True)
        assert got == pytest.approx(np.sqrt(3 * per_row), rel=1e-6)

    def test_tracks_realized_mismatch_energy(self):
        # the calibrated radius should track the realized mismatch norm of
        # the true scene across snapshots, unlike the unconditional policy
        params = ModelParams(n=60, k=2, k_c=8, sigma_s=1.0, sigma_v=0.15, m=2000)
        thresholds = compute_thresholds(CensorConfig(alpha=0.5, beta=0.1), params)
        rng = np.random.default_rng(7)
        ratios = {True: [], False: []}
        for _ in range(8):
            support = rng.choice(params.n, size=params.k, replace=False)
            amp = rng.normal(0.0, params.sigma_s, size=params.k)
            patterns = np.argpartition(
                rng.random((params.m, params.n)), params.k_c, axis=1
            )[:, : params.k_c]
            signs = rng.choice([-1.0, 1.0], size=(params.m, params.k_c))
            overlap_signal = np.zeros(params.m)
            for j, cell in enumerate(support):
                hits = patterns == cell
                overlap_signal += amp[j] * (signs * hits).sum(axis=1)
            noise = rng.normal(
                0.0, params.sigma_v * np.sqrt(params.k_c), size=params.m
            )
            z = overlap_signal + noise
            sent = np.abs(z) > thresholds.upper
            hard = np.abs(z) < thresholds.lower
            batch = synthetic_batch(int(sent.sum()), int(hard.sum()), z[sent])
            realized = {
                False: float(noise[sent] @ noise[sent]),
                True: float(
                    noise[sent] @ noise[sent]
                    + overlap_signal[hard] @ overlap_signal[hard]
                ),
            }
            for include in (True, False):
                cal = calibrated_epsilon(batch, thresholds, params, include)
                ratios[include].append(cal**2 / realized[include])
        for include in (True, False):
            assert 0.9 < np.mean(ratios[include]) < 1.1


class TestSerialization:
    def test_round_trip(self):
        batch, _ = make_batch()
        assert from_text(to_text(batch)) == batch

    def test_golden_layout(self):
        vec = SensingVector(n=5, support=np.array([0, 2, 4]), signs=np.array([1.0, -1.0, 1.0]))
        batch = collect(
            [Decision.send_value(0.5), Decision.hard_zero(), Decision.silent()],
            [vec, vec, vec],
        )
        assert to_text(batch) == (
            "# censorcs batch v1\n"
            "n=5 num_nodes=3\n"
            "node kind value support signs\n"
            "1 send 0.5 1,3,5 +,-,+\n"
            "2 hard -1 1,3,5 +,-,+\n"
        )

    def test_silent_nodes_survive_through_the_header(self):
        batch, _ = make_batch()
        clone = from_text(to_text(batch))
        assert clone.num_silent == batch.num_silent

    def test_payload_precision_is_exact(self):
        vec = SensingVector(n=3, support=np.array([1]), signs=np.array([1.0]))
        value = 0.1 + 0.2  # not representable prettily
        batch = collect([Decision.send_value(value)], [vec])
        assert from_text(to_text(batch)).sent_values[0] == value

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            from_text("nonsense\n")
        with pytest.raises(ValueError):
            from_text("# censorcs batch v1\nn=3 num_nodes=1\nheader\n1 whisper 0.5 1 +\n")


@given(
    seed=st.integers(0, 2**16),
    kinds=st.lists(st.sampled_from(["send", "hard", "silent"]), min_size=1, max_size=12),
    data=st.data(),
)
@settings(max_examples=60, deadline=None)
def test_collect_and_serialize_round_trip(seed, kinds, data):
    params = ModelParams(n=9, k=2, k_c=3, sigma_s=1.0, sigma_v=0.2, m=len(kinds))
    vectors = make_vectors(seed, len(kinds), params)
    decisions = []
    for kind in kinds:
        if kind == "send":
            payload = data.draw(
                st.floats(-10, 10).filter(lambda v: abs(v) > 1e-9)
            )
            decisions.append(Decision.send_value(payload))
        elif kind == "hard":
            decisions.append(Decision.hard_zero())
        else:
            decisions.append(Decision.silent())
    batch = collect(decisions, vectors)
    assert batch.num_send == kinds.count("send")
    assert batch.num_hard == kinds.count("hard")
    assert batch.num_silent == kinds.count("silent")
    assert from_text(to_text(batch)) == batch
