import math

import numpy as np
import pytest

import reldistill.losses as losses_mod
from reldistill.errors import (
    BatchTooSmall,
    EmptyGroup,
    LengthMismatch,
    NonPositiveTemperature,
    ShapeMismatch,
)
from reldistill.losses import (
    LOSS_KINDS,
    ContrastiveConfig,
    contrastive_loss,
    cross_modal_loss,
    evaluate_loss,
    intra_modal_loss,
    relational_loss,
    similarity_loss,
    superpool,
)
from reldistill.gradcheck import check_loss_gradient

from conftest import rand_normalized, rand_orthogonal


# ---------------------------------------------------------------------------
# naive loop oracles, straight from the loss definitions
# ---------------------------------------------------------------------------

def oracle_contrastive(k, q, tau):
    n = k.shape[0]
    total = 0.0
    for i in range(n):
        pos = math.exp(np.dot(k[i], q[i]) / tau)
        denom = 0.0
        for j in range(n):
            denom += math.exp(np.dot(k[i], q[j]) / tau)
        total += -math.log(pos / denom)
    return total / n


def oracle_similarity(k, q):
    n = k.shape[0]
    return sum(1.0 - float(np.dot(k[i], q[i])) for i in range(n)) / n


def oracle_cross(k, q):
    n = k.shape[0]
    diag = sum(1.0 - float(np.dot(k[i], q[i])) for i in range(n)) / n
    off = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                off += abs(float(np.dot(k[i], q[j])) - float(np.dot(q[i], q[j])))
    return diag + off / (n * n - n)


def oracle_intra(k, q):
    n = k.shape[0]
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            total += abs(float(np.dot(k[i], k[j])) - float(np.dot(q[i], q[j])))
    return 2.0 * total / (n * n - n)


def oracle_superpool(f, groups):
    m = int(max(groups)) + 1
    out = np.zeros((m, f.shape[1]))
    for g in range(m):
        members = [i for i, gi in enumerate(groups) if gi == g]
        out[g] = np.mean([f[i] for i in members], axis=0)
    return out


def pair(rng, n=6, c=3):
    return rand_normalized(rng, n, c), rand_normalized(rng, n, c)


# ---------------------------------------------------------------------------
# contrastive
# ---------------------------------------------------------------------------

class TestContrastive:
    def test_single_pair_is_zero(self, rng):
        k = rand_normalized(rng, 1, 4)
        res = contrastive_loss(k, k.copy(), ContrastiveConfig(0.1))
        assert res.value == 0.0
        np.testing.assert_allclose(res.grad_k, 0.0, atol=1e-15)

    def test_two_basis_rows_tau_one(self):
        k = np.eye(2)
        res = contrastive_loss(k, k.copy(), ContrastiveConfig(1.0))
        np.testing.assert_allclose(res.value, math.log(1.0 + math.exp(-1.0)), atol=1e-12)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 11))
        c = int(rng.integers(2, 6))
        k, q = pair(rng, n, c)
        res = contrastive_loss(k, q, ContrastiveConfig(0.1))
        assert abs(res.value - oracle_contrastive(k, q, 0.1)) < 1e-10

    def test_nonpositive_temperature(self, rng):
        k, q = pair(rng)
        with pytest.raises(NonPositiveTemperature):
            contrastive_loss(k, q, ContrastiveConfig(0.0))
        with pytest.raises(NonPositiveTemperature):
            contrastive_loss(k, q, ContrastiveConfig(-1.0))

    def test_tiny_temperature_stays_finite(self, rng):
        k, q = pair(rng, 8, 3)
        res = contrastive_loss(k, q, ContrastiveConfig(0.01))
        assert np.isfinite(res.value)
        assert np.all(np.isfinite(res.grad_k))

    def test_value_nonnegative(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            k, q = pair(rng, int(rng.integers(1, 9)), 3)
            tau = float(rng.choice([1.0, 0.1, 0.01]))
            assert contrastive_loss(k, q, ContrastiveConfig(tau)).value >= 0.0

    def test_self_similar_degenerate_is_log_n(self):
        # all targets identical and k_i = q_i: softmax is uniform, the value
        # pins to log N for every temperature (the false-negative extreme)
        for n in (2, 4, 8, 16):
            q = np.tile([[0.0, 0.0, 1.0]], (n, 1))
            for tau in (1.0, 0.1, 0.01):
                res = contrastive_loss(q, q.copy(), ContrastiveConfig(tau))
                assert res.value == math.log(n)


# ---------------------------------------------------------------------------
# similarity
# ---------------------------------------------------------------------------

class TestSimilarity:
    def test_identical_is_zero(self, rng):
        # random unit rows have self-dot 1 +- 1 ulp, so zero holds to fp noise
        k, _ = pair(rng)
        np.testing.assert_allclose(similarity_loss(k, k.copy()).value, 0.0, atol=1e-15)
        assert similarity_loss(np.eye(3), np.eye(3)).value == 0.0

    def test_antipodal_is_two(self, rng):
        k, _ = pair(rng)
        np.testing.assert_allclose(similarity_loss(k, -k).value, 2.0, atol=1e-12)

    def test_orthogonal_is_one(self):
        k = np.tile([[1.0, 0.0, 0.0]], (4, 1))
        q = np.tile([[0.0, 1.0, 0.0]], (4, 1))
        assert similarity_loss(k, q).value == 1.0

    def test_gradient_is_minus_q_over_n(self, rng):
        k, q = pair(rng, 5, 4)
        np.testing.assert_array_equal(similarity_loss(k, q).grad_k, -q / 5)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            similarity_loss(rand_normalized(rng, 3, 3), rand_normalized(rng, 4, 3))


# ---------------------------------------------------------------------------
# relational family
# ---------------------------------------------------------------------------

class TestCrossModal:
    def test_identical_is_zero(self, rng):
        k, _ = pair(rng)
        np.testing.assert_allclose(cross_modal_loss(k, k.copy()).value, 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 11))
        k, q = pair(rng, n, 3)
        assert abs(cross_modal_loss(k, q).value - oracle_cross(k, q)) < 1e-10

    def test_dominates_similarity(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            k, q = pair(rng, int(rng.integers(2, 9)), 3)
            assert cross_modal_loss(k, q).value >= similarity_loss(k, q).value - 1e-12

    def test_batch_too_small(self, rng):
        k, q = pair(rng, 1, 3)
        with pytest.raises(BatchTooSmall):
            cross_modal_loss(k, q)


class TestIntraModal:
    def test_identical_is_zero(self, rng):
        k, _ = pair(rng)
        np.testing.assert_allclose(intra_modal_loss(k, k.copy()).value, 0.0, atol=1e-15)

    def test_joint_rotation_of_q_is_zero(self, rng):
        q = rand_normalized(rng, 8, 3)
        r = rand_orthogonal(rng, 3)
        res = intra_modal_loss(q @ r, q)
        np.testing.assert_allclose(res.value, 0.0, atol=1e-9)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 11))
        k, q = pair(rng, n, 3)
        assert abs(intra_modal_loss(k, q).value - oracle_intra(k, q)) < 1e-10

    def test_bounded_by_two(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            k, q = pair(rng, int(rng.integers(2, 9)), 3)
            assert 0.0 <= intra_modal_loss(k, q).value <= 2.0


class TestRelational:
    def test_identical_is_zero(self, rng):
        k, _ = pair(rng)
        np.testing.assert_allclose(relational_loss(k, k.copy()).value, 0.0, atol=1e-12)

    def test_additivity(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            k, q = pair(rng, int(rng.integers(2, 9)), int(rng.integers(2, 5)))
            rel = relational_loss(k, q)
            intra = intra_modal_loss(k, q)
            cross = cross_modal_loss(k, q)
            np.testing.assert_allclose(
                rel.value, intra.value + cross.value, rtol=0, atol=1e-12
            )
            np.testing.assert_allclose(
                rel.grad_k, intra.grad_k + cross.grad_k, rtol=0, atol=1e-12
            )

    def test_fast_and_generic_paths_agree(self, monkeypatch, rng):
        for seed in range(20):
            r = np.random.default_rng(seed)
            k, q = pair(r, 7, 3)
            fast = relational_loss(k, q)
            monkeypatch.setattr(losses_mod, "_USE_FAST_KERNEL", False)
            slow = relational_loss(k, q)
            monkeypatch.setattr(losses_mod, "_USE_FAST_KERNEL", True)
            np.testing.assert_allclose(fast.value, slow.value, rtol=0, atol=1e-12)
            np.testing.assert_allclose(fast.grad_k, slow.grad_k, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# invariances shared by every loss
# ---------------------------------------------------------------------------

def _eval(kind, k, q):
    return evaluate_loss(kind, k, q, temperature=0.1).value


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_joint_rotation_invariance(kind):
    for seed in range(40):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 6))
        k, q = rand_normalized(rng, 6, c), rand_normalized(rng, 6, c)
        r = rand_orthogonal(rng, c)
        base = _eval(kind, k, q)
        rotated = _eval(kind, k @ r, q @ r)
        np.testing.assert_allclose(rotated, base, atol=1e-9)


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_pair_permutation_invariance(kind):
    for seed in range(40):
        rng = np.random.default_rng(seed)
        k, q = rand_normalized(rng, 7, 3), rand_normalized(rng, 7, 3)
        perm = rng.permutation(7)
        base = _eval(kind, k, q)
        permuted = _eval(kind, k[perm], q[perm])
        np.testing.assert_allclose(permuted, base, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# analytic gradients vs. finite differences
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_gradients_match_finite_differences(kind):
    result = check_loss_gradient(kind, n=8, c=4, trials=100, seed=0)
    assert result.trials_run >= 90, f"too many kink skips: {result}"
    assert result.passed(), f"{result}"


def test_gradcheck_covers_c3_fast_path():
    result = check_loss_gradient("relational", n=8, c=3, trials=50, seed=7)
    assert result.passed(), f"{result}"


# ---------------------------------------------------------------------------
# superpool
# ---------------------------------------------------------------------------

class TestSuperpool:
    def test_definitional_average(self):
        f = np.array([[1.0, 2.0], [3.0, 4.0], [10.0, 20.0]])
        out = superpool(f, [0, 0, 1])
        np.testing.assert_array_equal(out, [[2.0, 3.0], [10.0, 20.0]])

    def test_singleton_groups_identity(self, rng):
        f = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(superpool(f, np.arange(5)), f)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_grouping_oracle(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((10, 4))
        groups = rng.integers(0, 3, size=10)
        while len(set(groups.tolist())) < 3:
            groups = rng.integers(0, 3, size=10)
        np.testing.assert_allclose(
            superpool(f, groups), oracle_superpool(f, groups), rtol=0, atol=1e-12
        )

    def test_empty_group(self):
        with pytest.raises(EmptyGroup) as exc:
            superpool(np.ones((3, 2)), [0, 0, 2])
        assert exc.value.group == 1

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            superpool(np.ones((3, 2)), [0, 0])

    def test_output_not_normalized(self):
        # opposite unit rows average to a sub-unit row; pooling must keep it
        f = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = superpool(f, [0, 0])
        np.testing.assert_array_equal(out, [[0.5, 0.5]])
