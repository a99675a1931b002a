"""Resampling engine tests: row draws, block subsampling, score accumulation."""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from rss_select.data import Dataset, GridGeometry, Parcellation, RngStream, StabilityScores
from rss_select.solver import SolverConfig
from rss_select.stability import (
    BlockCover,
    StabilityConfig,
    average_supervoxels,
    cluster_quotas,
    constrained_block_subsample,
    draw_iteration,
    draw_row_subsample,
    load_scores_csv,
    round_nearest,
    run_stability_selection,
    save_scores_csv,
    threshold_scores,
)

DEFAULT_SOLVER = SolverConfig(loss_weight=0.5)


def _full_grid_geometry(dims):
    coords = np.array(list(itertools.product(*(range(d) for d in dims))), dtype=np.uint32)
    return GridGeometry(dims=dims, mask=coords)


def _quadrant_parcellation(geometry):
    # 8x8x1 grid split into four 4x4 quadrants
    x, y = geometry.mask[:, 0], geometry.mask[:, 1]
    assignment = (x // 4) * 2 + (y // 4)
    return Parcellation(assignment=assignment.astype(np.int64), q=4)


def test_round_nearest_halves_go_up():
    assert round_nearest(0.5) == 1
    assert round_nearest(1.5) == 2
    assert round_nearest(2.5) == 3
    assert round_nearest(2.49) == 2
    assert round_nearest(2.51) == 3
    assert round_nearest(0.0) == 0
    assert round_nearest(-0.5) == 0


def test_row_subsample_alpha_one_returns_every_row():
    rows = draw_row_subsample(7, 1.0, RngStream(0, 0))
    assert_array_equal(rows, np.arange(7))


def test_row_subsample_half_of_hundred():
    rows = draw_row_subsample(100, 0.5, RngStream(1, 0))
    assert rows.size == 50
    assert np.unique(rows).size == 50
    assert rows.min() >= 0 and rows.max() < 100
    assert_array_equal(rows, np.sort(rows))


def test_row_subsample_frequencies_are_uniform():
    """Over 10000 draws with n=10, alpha=0.5 each row appears half the time."""
    gen = RngStream(2, 0).generator()
    hits = np.zeros(10)
    draws = 10000
    for _ in range(draws):
        hits[draw_row_subsample(10, 0.5, gen)] += 1
    freq = hits / draws
    assert (np.abs(freq - 0.5) <= 0.02).all()


def test_row_subsample_rejects_empty_draws():
    with pytest.raises(ValueError, match="zero"):
        draw_row_subsample(10, 0.04, RngStream(0, 0))
    with pytest.raises(ValueError, match="alpha"):
        draw_row_subsample(10, 0.0, RngStream(0, 0))
    with pytest.raises(ValueError, match="n must be positive"):
        draw_row_subsample(0, 0.5, RngStream(0, 0))


def test_cluster_quotas_floor_and_rounding():
    parc = Parcellation(
        assignment=np.repeat([0, 1, 2], [10, 3, 5]).astype(np.int64), q=3
    )
    assert_array_equal(cluster_quotas(parc, 0.1), [1, 1, 1])
    assert_array_equal(cluster_quotas(parc, 0.5), [5, 2, 3])  # 2.5 rounds up
    assert_array_equal(cluster_quotas(parc, 1.0), [10, 3, 5])
    with pytest.raises(ValueError, match="beta"):
        cluster_quotas(parc, 0.0)


def test_block_cover_covers_each_masked_voxel_uniformly():
    """Every in-mask voxel belongs to exactly bx*by*bz anchors, so block
    placement introduces no edge bias."""
    rng = np.random.default_rng(3)
    full = np.array(list(itertools.product(range(5), range(4), range(3))), dtype=np.uint32)
    mask = full[np.sort(rng.choice(full.shape[0], size=30, replace=False))]
    geometry = GridGeometry(dims=(5, 4, 3), mask=mask)
    for block in [(1, 1, 1), (2, 2, 1), (3, 3, 3)]:
        cover = BlockCover(geometry, block)
        coverage = np.zeros(30, dtype=np.int64)
        for a in range(cover.n_anchors):
            coverage[cover.voxels_of(a)] += 1
        assert_array_equal(coverage, np.full(30, block[0] * block[1] * block[2]))


def test_block_subsample_beta_one_picks_everything():
    geometry = _full_grid_geometry((8, 8, 1))
    parc = _quadrant_parcellation(geometry)
    picked = constrained_block_subsample(geometry, parc, 1.0, (2, 2, 1), RngStream(4, 0))
    members = parc.members()
    assert len(picked) == 4
    for g in range(4):
        assert_array_equal(picked[g], members[g])


def test_block_subsample_small_cluster_quota_is_one():
    # cluster of size 10 at beta=0.1 yields exactly one voxel
    geometry = _full_grid_geometry((10, 1, 1))
    parc = Parcellation(assignment=np.zeros(10, dtype=np.int64), q=1)
    picked = constrained_block_subsample(geometry, parc, 0.1, (3, 1, 1), RngStream(5, 0))
    assert len(picked) == 1
    assert picked[0].size == 1


def test_block_subsample_quota_exactness_on_random_parcellations():
    rng = np.random.default_rng(6)
    geometry = _full_grid_geometry((12, 12, 2))
    gen = RngStream(7, 0).generator()
    for trial in range(10):
        q = int(rng.integers(2, 9))
        assignment = rng.integers(0, q, size=geometry.p)
        assignment[:q] = np.arange(q)  # keep every cluster populated
        parc = Parcellation(assignment=assignment.astype(np.int64), q=q)
        beta = float(rng.uniform(0.05, 0.6))
        quotas = cluster_quotas(parc, beta)
        picked = constrained_block_subsample(geometry, parc, beta, (3, 3, 2), gen)
        members = parc.members()
        for g in range(q):
            assert picked[g].size == quotas[g]
            assert_array_equal(picked[g], np.sort(picked[g]))
            assert np.isin(picked[g], members[g]).all()


def test_block_subsample_deterministic_for_stream():
    geometry = _full_grid_geometry((8, 8, 1))
    parc = _quadrant_parcellation(geometry)
    a = constrained_block_subsample(geometry, parc, 0.25, (2, 2, 1), RngStream(8, 3))
    b = constrained_block_subsample(geometry, parc, 0.25, (2, 2, 1), RngStream(8, 3))
    for pa, pb in zip(a, b):
        assert_array_equal(pa, pb)


def test_block_subsample_inclusion_frequency_and_adjacency():
    """5000 draws on an 8x8x1 grid with four equal clusters at beta=0.25:
    per-voxel inclusion lands within 0.03 of beta, and grid-adjacent pairs
    co-occur more often than distant same-cluster pairs (blocks are the only
    source of that coupling)."""
    geometry = _full_grid_geometry((8, 8, 1))
    parc = _quadrant_parcellation(geometry)
    quotas = cluster_quotas(parc, 0.25)
    assert_array_equal(quotas, [4, 4, 4, 4])
    cover = BlockCover(geometry, (2, 2, 1))
    gen = RngStream(9, 0).generator()
    members = parc.members()

    draws = 5000
    hits = np.zeros(geometry.p)
    joint = np.zeros((geometry.p, geometry.p))
    for _ in range(draws):
        picked = cover.draw(gen, parc, quotas, members)
        flat = np.concatenate(picked)
        hits[flat] += 1
        joint[np.ix_(flat, flat)] += 1
    freq = hits / draws
    assert (np.abs(freq - 0.25) <= 0.03).all()

    coords = geometry.mask.astype(np.int64)
    same_cluster = parc.assignment[:, None] == parc.assignment[None, :]
    manhattan = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=2)
    adjacent = same_cluster & (manhattan == 1)
    distant = same_cluster & (manhattan >= 3)
    joint_freq = joint / draws
    assert joint_freq[adjacent].mean() > joint_freq[distant].mean() + 0.01


def test_average_supervoxels_examples():
    # constant picked columns stay constant through the mean
    X = np.ones((3, 4))
    X[:, [1, 2]] = 3.0
    out = average_supervoxels(X, (np.array([1, 2]),))
    assert_array_equal(out, np.full((3, 1), 3.0))

    # singleton picks reduce to a column subset
    rng = np.random.default_rng(10)
    X = rng.normal(size=(5, 6))
    out = average_supervoxels(X, (np.array([4]), np.array([0])))
    assert_array_equal(out, X[:, [4, 0]])

    # picked values {1, 3} per row average to 2
    X = np.array([[1.0, 3.0], [3.0, 1.0]])
    out = average_supervoxels(X, (np.array([0, 1]),))
    assert_array_equal(out, np.full((2, 1), 2.0))


def test_average_supervoxels_rejects_empty_cluster_pick():
    X = np.ones((2, 3))
    with pytest.raises(ValueError, match="no picked"):
        average_supervoxels(X, (np.array([0]), np.array([], dtype=np.int64)))
    parc = Parcellation(assignment=np.array([0, 1, 1]), q=2)
    with pytest.raises(ValueError, match="parcellation"):
        average_supervoxels(X, (np.array([0]),), parc)


def _noise_dataset(seed=0, n=40, dims=(10, 10, 4)):
    rng = np.random.default_rng(seed)
    geometry = _full_grid_geometry(dims)
    X = rng.normal(size=(n, geometry.p))
    y = rng.permutation(np.repeat([1, -1], n // 2))
    return Dataset(X=X, y=y, geometry=geometry)


def _slab_parcellation(p, q):
    size = p // q
    return Parcellation(assignment=(np.arange(p) // size).clip(max=q - 1), q=q)


def test_pure_noise_scores_stay_low():
    """Regression pin: on i.i.d. noise with balanced random labels nothing
    should look stable. Observed max normalized score 0.14 on this seed."""
    ds = _noise_dataset(seed=0)
    parc = _slab_parcellation(ds.p, 16)
    config = StabilityConfig(solver=DEFAULT_SOLVER, K=50, master_seed=0)
    scores = run_stability_selection(ds, parc, config)
    assert scores.normalized.max() <= 0.6


def test_separating_cluster_outscores_noise_clusters():
    rng = np.random.default_rng(11)
    geometry = _full_grid_geometry((6, 6, 1))
    x, y_coord = geometry.mask[:, 0], geometry.mask[:, 1]
    assignment = ((x // 3) * 2 + (y_coord // 3)).astype(np.int64)
    parc = Parcellation(assignment=assignment, q=4)

    n = 30
    y = rng.permutation(np.repeat([1, -1], n // 2))
    X = rng.normal(size=(n, geometry.p))
    signal = np.flatnonzero(assignment == 0)
    X[:, signal] = y[:, None] + 0.05 * rng.normal(size=(n, signal.size))

    config = StabilityConfig(solver=DEFAULT_SOLVER, K=25, alpha=0.5, beta=0.5,
                             block_shape=(2, 2, 1), master_seed=3)
    scores = run_stability_selection(ds := Dataset(X=X, y=y, geometry=geometry), parc, config)
    rest = np.flatnonzero(assignment != 0)
    assert scores.normalized[signal].max() > scores.normalized[rest].max()
    # the winning cluster is picked and kept in essentially every iteration
    assert scores.normalized[signal].max() > 0.4


def test_single_iteration_counts_are_binary():
    ds = _noise_dataset(seed=1, n=20, dims=(6, 6, 1))
    parc = _slab_parcellation(ds.p, 4)
    config = StabilityConfig(solver=DEFAULT_SOLVER, K=1, master_seed=5, block_shape=(2, 2, 1))
    scores = run_stability_selection(ds, parc, config)
    assert set(np.unique(scores.counts)) <= {0, 1}


def test_counts_accumulate_monotonically_in_k():
    ds = _noise_dataset(seed=2, n=20, dims=(6, 6, 1))
    parc = _slab_parcellation(ds.p, 4)
    solver = DEFAULT_SOLVER
    ten = run_stability_selection(
        ds, parc, StabilityConfig(solver=solver, K=10, master_seed=7, block_shape=(2, 2, 1))
    )
    eleven = run_stability_selection(
        ds, parc, StabilityConfig(solver=solver, K=11, master_seed=7, block_shape=(2, 2, 1))
    )
    assert (eleven.counts >= ten.counts).all()


def test_thread_count_does_not_change_counts():
    ds = _noise_dataset(seed=3, n=20, dims=(6, 6, 1))
    parc = _slab_parcellation(ds.p, 4)
    config = StabilityConfig(solver=DEFAULT_SOLVER, K=12, master_seed=9, block_shape=(2, 2, 1))
    serial = run_stability_selection(ds, parc, config, threads=1)
    pooled = run_stability_selection(ds, parc, config, threads=4)
    assert_array_equal(serial.counts, pooled.counts)


def test_draw_iteration_replays_deterministically():
    ds = _noise_dataset(seed=4, n=20, dims=(6, 6, 1))
    parc = _slab_parcellation(ds.p, 4)
    config = StabilityConfig(solver=DEFAULT_SOLVER, K=5, master_seed=11, block_shape=(2, 2, 1))
    quotas = cluster_quotas(parc, config.beta)
    for k in range(3):
        a = draw_iteration(ds, parc, config, k)
        b = draw_iteration(ds, parc, config, k)
        assert_array_equal(a.rows, b.rows)
        assert a.rows.size == round_nearest(config.alpha * ds.n)
        for g, (pa, pb) in enumerate(zip(a.picked, b.picked)):
            assert_array_equal(pa, pb)
            assert pa.size == quotas[g]


def test_missing_geometry_falls_back_with_warning():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(20, 30))
    y = np.array([1, -1] * 10)
    ds = Dataset(X=X, y=y)
    parc = _slab_parcellation(30, 3)
    config = StabilityConfig(solver=DEFAULT_SOLVER, K=5, master_seed=1)
    with pytest.warns(UserWarning, match="geometry"):
        scores = run_stability_selection(ds, parc, config)
    assert scores.counts.size == 30
    assert scores.K == 5


def test_widespread_non_convergence_aborts_with_diagnostics():
    ds = _noise_dataset(seed=5, n=20, dims=(6, 6, 1))
    parc = _slab_parcellation(ds.p, 4)
    strangled = SolverConfig(loss_weight=0.5, max_iters=1, tol_kkt=1e-12)
    config = StabilityConfig(solver=strangled, K=10, master_seed=2, block_shape=(2, 2, 1))
    with pytest.raises(RuntimeError, match="failed to converge"):
        run_stability_selection(ds, parc, config)


def test_feature_count_mismatch_rejected():
    ds = _noise_dataset(seed=6, n=20, dims=(6, 6, 1))
    parc = _slab_parcellation(ds.p + 1, 4)
    config = StabilityConfig(solver=DEFAULT_SOLVER, K=2)
    with pytest.raises(ValueError, match="feature count"):
        run_stability_selection(ds, parc, config)
    with pytest.raises(ValueError, match="threads"):
        run_stability_selection(ds, _slab_parcellation(ds.p, 4), config, threads=0)


def test_threshold_scores_examples():
    scores = StabilityScores(counts=np.array([50, 25, 0]), K=50)
    assert_array_equal(threshold_scores(scores, 0.0), [0, 1, 2])
    assert_array_equal(threshold_scores(scores, 1.5), [])
    assert_array_equal(threshold_scores(scores, 0.5), [0, 1])
    with pytest.raises(ValueError, match="finite"):
        threshold_scores(scores, float("nan"))


def test_stability_config_validation():
    solver = DEFAULT_SOLVER
    with pytest.raises(ValueError, match="K"):
        StabilityConfig(solver=solver, K=0)
    with pytest.raises(ValueError, match="alpha"):
        StabilityConfig(solver=solver, alpha=0.0)
    with pytest.raises(ValueError, match="beta"):
        StabilityConfig(solver=solver, beta=1.5)
    with pytest.raises(ValueError, match="block_shape"):
        StabilityConfig(solver=solver, block_shape=(0, 3, 3))
    with pytest.raises(ValueError, match="block_shape"):
        StabilityConfig(solver=solver, block_shape=(3, 3))


def test_scores_csv_roundtrip_with_geometry(tmp_path):
    ds = _noise_dataset(seed=7, n=20, dims=(4, 3, 2))
    rng = np.random.default_rng(13)
    counts = rng.integers(0, 10, size=ds.p)
    score = counts / 10 + rng.uniform(0, 1e-9, size=ds.p)  # exercise %.17g fidelity
    path = tmp_path / "scores.csv"
    save_scores_csv(path, score, counts=counts, geometry=ds.geometry)

    back = load_scores_csv(path)
    assert back["score"].dtype == np.float64
    assert_array_equal(back["count"], counts)
    assert_array_equal(back["coords"], ds.geometry.mask)
    assert_array_equal(back["score"], score)  # exact round trip
    assert path.read_text().splitlines()[0] == "feature,x,y,z,count,score"


def test_scores_csv_without_geometry_uses_sentinel_coords(tmp_path):
    path = tmp_path / "scores.csv"
    save_scores_csv(path, np.array([0.5, 0.25]))
    back = load_scores_csv(path)
    assert_array_equal(back["coords"], np.full((2, 3), -1))
    assert_array_equal(back["count"], [0, 0])


def test_scores_csv_rejects_corrupted_files(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("feature,score\n0,1.0\n")
    with pytest.raises(ValueError, match="header"):
        load_scores_csv(path)
    path.write_text("feature,x,y,z,count,score\n1,-1,-1,-1,0,0.5\n")
    with pytest.raises(ValueError, match="0..p-1"):
        load_scores_csv(path)
