import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bbm_edge.engine import (
    ALIVE, BRANCHED, PRUNED, CapacityError, GenealogyTree, PruneConfig, ancestral_path, extremal_snapshot,
    overlap_Q, pair_overlaps, resample_leaf_positions, resample_positions_on_skeleton, simulate,
)
from bbm_edge.envelopes import front_m
from bbm_edge.kernels import OffspringLaw, RngStream


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.floats(0.1, 5.0), st.sampled_from([0.1, 0.25, 1.0]))
def test_simulated_trees_pass_audit(seed, t, grid_dt):
    tree = simulate(t, OffspringLaw.binary(), RngStream(seed), grid_dt=grid_dt)
    tree.audit()
    assert tree.n_alive == np.count_nonzero(tree.status == ALIVE)


@settings(max_examples=10)
@given(st.integers(0, 2**32))
def test_multitype_law_tree_audit(seed):
    law = OffspringLaw.parse("1:0.5,2:0.25,4:0.25")
    tree = simulate(3.0, law, RngStream(seed))
    tree.audit()
    counts = np.bincount(tree.parent[1:], minlength=tree.n_records)
    assert set(counts[tree.status == BRANCHED]) <= {1, 2, 4}


def test_checkpoints_cover_every_grid_multiple(small_tree):
    dt = small_tree.grid_dt
    for i in range(small_tree.n_records):
        s, _ = small_tree.checkpoints(i)
        a, b = small_tree.birth_time[i], small_tree.death_time[i]
        grid = dt * np.arange(math.floor(a / dt) + 1, math.ceil(b / dt))
        grid = grid[(grid > a + 1e-12) & (grid < b - 1e-12)]
        assert np.all(np.isin(np.round(grid, 9), np.round(s, 9)))
        assert np.all(np.diff(s) > 0)


def test_same_stream_same_tree(binary):
    a = simulate(5.0, binary, RngStream(3, 4))
    b = simulate(5.0, binary, RngStream(3, 4))
    assert np.array_equal(a.death_position, b.death_position)
    assert np.array_equal(a.parent, b.parent)


def test_workspace_growth_does_not_change_the_tree(binary):
    # a large tree forces the arena to regrow and replay the stream
    big = simulate(9.0, binary, RngStream(1, 1))
    again = simulate(9.0, binary, RngStream(1, 1))
    assert big.n_records > 4096
    assert np.array_equal(big.death_position, again.death_position)


def test_capacity_error(binary):
    with pytest.raises(CapacityError):
        simulate(8.0, binary, RngStream(0), max_particles=100)


@pytest.mark.parametrize("kwargs", [{"t": 0.0}, {"t": 1.0, "grid_dt": 0.0}, {"t": 1.0, "grid_dt": 2.0}])
def test_simulate_rejects_bad_arguments(binary, kwargs):
    with pytest.raises(ValueError):
        simulate(law=binary, rng=RngStream(0), **kwargs)


def test_prune_margin_floor():
    with pytest.raises(ValueError, match="10"):
        PruneConfig(True, 5.0)


def test_population_mean_and_pure_birth_law(binary):
    t = 2.0
    n = np.array([simulate(t, binary, RngStream(99, k), copy=False).n_alive for k in range(4000)])
    se = n.std(ddof=1) / math.sqrt(n.size)
    assert abs(n.mean() - math.exp(t)) < 3 * se
    # P[n = 1] = e^{-t}
    p1 = math.exp(-t)
    assert abs(np.mean(n == 1) - p1) < 3 * math.sqrt(p1 * (1 - p1) / n.size)


def test_forked_tree_overlaps(forked_tree):
    assert overlap_Q(forked_tree, 3, 4) == 2.5
    assert overlap_Q(forked_tree, 2, 3) == 1.0
    assert overlap_Q(forked_tree, 4, 2) == 1.0
    assert overlap_Q(forked_tree, 3, 3) == 4.0
    q = pair_overlaps(forked_tree, [3, 2, 3], [4, 4, 3])
    assert np.array_equal(q, [2.5, 1.0, 4.0])


def test_overlap_needs_alive_particles(forked_tree):
    with pytest.raises(ValueError, match="not alive"):
        overlap_Q(forked_tree, 1, 3)
    with pytest.raises(ValueError, match="no particle"):
        overlap_Q(forked_tree, 3, 17)


def test_ancestral_path_of_fixture(forked_tree):
    path = ancestral_path(forked_tree, 3)
    assert np.array_equal(path.times, [0.0, 1.0, 2.5, 4.0])
    assert np.array_equal(path.positions, [0.0, 0.4, 1.1, 2.0])
    assert path.at(2.5) == 1.1
    with pytest.raises(ValueError):
        path.at(2.0)


def test_ancestral_paths_share_the_common_stretch(small_tree):
    leaves = small_tree.alive
    i, j = leaves[0], leaves[-1]
    q = overlap_Q(small_tree, i, j)
    pi, pj = ancestral_path(small_tree, i), ancestral_path(small_tree, j)
    shared = pi.times <= q + 1e-12
    assert np.array_equal(pi.times[shared], pj.times[pj.times <= q + 1e-12])
    assert np.array_equal(pi.positions[shared], pj.positions[pj.times <= q + 1e-12])


def test_covariance_equals_overlap_on_fixture(forked_tree):
    x = resample_leaf_positions(forked_tree, [3, 4, 2], 200_000, RngStream(5))
    cov = np.cov(x.T)
    assert np.allclose(np.diag(cov), 4.0, rtol=0.02)
    assert cov[0, 1] == pytest.approx(2.5, abs=0.06)
    assert cov[0, 2] == pytest.approx(1.0, abs=0.06)


def test_root_split_pair_is_uncorrelated(root_split_tree):
    x = resample_leaf_positions(root_split_tree, [1, 2], 100_000, RngStream(6))
    centred = x - x.mean(axis=0)
    prod = centred[:, 0] * centred[:, 1]
    assert abs(prod.mean()) < 3 * prod.std() / math.sqrt(prod.size)


def test_resampled_skeleton_keeps_topology(small_tree):
    other = resample_positions_on_skeleton(small_tree, RngStream(8))
    other.audit()
    assert np.array_equal(other.parent, small_tree.parent)
    assert np.array_equal(other.ck_time, small_tree.ck_time)
    assert not np.array_equal(other.ck_pos, small_tree.ck_pos)


def test_save_load_round_trip(small_tree, tmp_path):
    small_tree.save(tmp_path, "tree")
    back = GenealogyTree.load(tmp_path, "tree", t=small_tree.t)
    for name in ("parent", "birth_time", "birth_position", "death_time", "death_position", "status"):
        assert np.array_equal(getattr(back, name), getattr(small_tree, name))
    for i in range(small_tree.n_records):
        for a, b in zip(back.checkpoints(i), small_tree.checkpoints(i)):
            assert np.array_equal(a, b)


def test_broken_fixture_fails_audit():
    with pytest.raises(AssertionError):
        GenealogyTree.from_records(2.0, [-1, 0], [0.0, 1.0], [1.0, 1.5], [0.0, 0.0], [BRANCHED, ALIVE])


def test_extremal_snapshot_window(small_tree):
    snap = extremal_snapshot(small_tree, (-3.0, 1.0))
    m = front_m(small_tree.t)
    rel = small_tree.final_positions - m
    assert len(snap) == np.count_nonzero((rel >= -3) & (rel <= 1))
    assert np.all(np.diff(snap.positions) <= 0)
    assert np.allclose(small_tree.death_position[snap.leaves] - m, snap.positions)


def test_wide_prune_margin_changes_nothing(binary):
    plain = simulate(8.0, binary, RngStream(4, 4))
    pruned = simulate(8.0, binary, RngStream(4, 4), prune=PruneConfig(True, 40.0))
    assert pruned.n_pruned == 0
    assert np.array_equal(plain.death_position, pruned.death_position)


def test_pruned_records_sit_below_the_line(binary):
    t, margin = 9.0, 10.0
    tree = simulate(t, binary, RngStream(4, 5), prune=PruneConfig(True, margin))
    tree.audit()
    killed = tree.status == PRUNED
    assert killed.any()
    slope = front_m(t) / t
    assert np.all(tree.death_position[killed] < slope * tree.death_time[killed] - margin)
    assert not np.any(tree.children(int(np.flatnonzero(killed)[0])).size)


def test_pruning_leaves_the_maximum_law_unchanged(binary):
    # compared above m(t) - L, the level below which pruning may act
    t, n, margin = 9.0, 300, 10.0
    floor = front_m(t) - margin

    def clipped_max(tree):
        x = tree.final_positions
        return max(x.max(), floor) if x.size else floor

    plain = [clipped_max(simulate(t, binary, RngStream(21, k), copy=False)) for k in range(n)]
    pruned, total_pruned = [], 0
    for k in range(n):
        tree = simulate(t, binary, RngStream(22, k), prune=PruneConfig(True, margin), copy=False)
        total_pruned += tree.n_pruned
        pruned.append(clipped_max(tree))
    assert total_pruned > 0
    assert stats.ks_2samp(plain, pruned).pvalue > 0.01
