import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapmsi import FilterArrayPattern, PolarizedFilterBank, SensitivityMatrix, annd, optimize_pattern, preset_pattern
from snapmsi.errors import ConfigError
from snapmsi.patterns import AnnealingSchedule, anneal_pattern, best_of_restarts


def brute_annd_plane(cells, k):
    """Nearest sample searched over a 3x3 block of tiles, no wraparound shortcut."""
    cells = np.asarray(cells)
    h, w = cells.shape
    per_band = []
    for f in range(k):
        samples = [(r + a * h, c + b * w) for r in range(h) for c in range(w) if cells[r, c] == f
                   for a in (-1, 0, 1) for b in (-1, 0, 1)]
        dists = [min(math.sqrt((r - sr) ** 2 + (c - sc) ** 2) for sr, sc in samples)
                 for r in range(h) for c in range(w)]
        per_band.append(math.fsum(dists) / (h * w))
    return per_band, math.fsum(per_band) / k


def brute_annd_torus(cells, k):
    cells = np.asarray(cells)
    h, w = cells.shape
    per_band = []
    for f in range(k):
        members = list(zip(*np.nonzero(cells == f)))
        dists = []
        for r in range(h):
            for c in range(w):
                best = math.inf
                for sr, sc in members:
                    dr = min(abs(r - sr), h - abs(r - sr))
                    dc = min(abs(c - sc), w - abs(c - sc))
                    best = min(best, math.sqrt(dr * dr + dc * dc))
                dists.append(best)
        per_band.append(math.fsum(dists) / (h * w))
    return per_band, math.fsum(per_band) / k


def random_cells(rng, h, w, k):
    cells = np.concatenate([np.arange(k), rng.integers(0, k, h * w - k)])
    rng.shuffle(cells)
    return cells.reshape(h, w)


def exhaustive_equal_counts(h, w, k):
    """Exact minimum overall ANND over all partitions into k equal cell sets."""
    area = h * w
    size = area // k
    value = {}
    for subset in itertools.combinations(range(area), size):
        cells = np.full(area, 1)
        cells[list(subset)] = 0
        value[sum(1 << i for i in subset)] = brute_annd_torus(cells.reshape(h, w), 2)[0][0]

    @lru_cache(maxsize=None)
    def best(free):
        if free == 0:
            return 0.0
        low = (free & -free).bit_length() - 1
        rest = [i for i in range(area) if free >> i & 1 and i != low]
        out = math.inf
        for combo in itertools.combinations(rest, size - 1):
            m = (1 << low) | sum(1 << i for i in combo)
            out = min(out, value[m] + best(free & ~m))
        return out

    return best((1 << area) - 1) / k


class TestAnnd:
    @pytest.mark.parametrize("shape", [(1, 1), (2, 2), (2, 3), (3, 3), (4, 4), (3, 5), (5, 6), (6, 6)])
    def test_matches_brute_force_exactly(self, rng, shape):
        h, w = shape
        for k in sorted({1, min(2, h * w), min(4, h * w), h * w}):
            for _ in range(3):
                cells = random_cells(rng, h, w, k)
                rep = annd(FilterArrayPattern(cells, k))
                torus = brute_annd_torus(cells, k)
                assert list(rep.per_band) == torus[0]
                assert rep.overall == torus[1]

    @pytest.mark.parametrize("shape", [(2, 2), (3, 3), (4, 4), (4, 6), (6, 6)])
    def test_toroidal_shortcut_matches_plane(self, rng, shape):
        h, w = shape
        for k in (1, 2, 4):
            cells = random_cells(rng, h, w, k)
            assert annd(FilterArrayPattern(cells, k)).overall == brute_annd_plane(cells, k)[1]

    def test_single_filter_zero(self):
        rep = annd(FilterArrayPattern([[0, 0], [0, 0]], 1))
        assert rep.per_band == (0.0,) and rep.overall == 0.0

    def test_bayer_like(self):
        rep = annd(FilterArrayPattern([[0, 1], [2, 3]], 4))
        assert rep.overall == pytest.approx((2 + math.sqrt(2)) / 4, abs=1e-15)
        assert all(v == pytest.approx(0.8535533905932737, abs=1e-15) for v in rep.per_band)

    def test_one_cell_per_filter_4x4(self):
        want = (0 + 4 * 1 + 4 * math.sqrt(2) + 2 * 2 + 4 * math.sqrt(5) + math.sqrt(8)) / 16
        rep = annd(preset_pattern("fig7-pol16")[0])
        assert rep.overall == pytest.approx(want, abs=1e-15)
        assert rep.overall == pytest.approx(1.5893471, abs=1e-7)

    def test_invalid_pattern(self):
        with pytest.raises(ConfigError):
            annd(FilterArrayPattern([[0, 0]], 2))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1), st.integers(0, 4), st.integers(0, 4))
    def test_shift_and_relabel_invariance(self, h, w, seed, dr, dc):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, h * w + 1))
        cells = random_cells(rng, h, w, k)
        base = annd(FilterArrayPattern(cells, k))
        shifted = annd(FilterArrayPattern(np.roll(cells, (dr, dc), axis=(0, 1)), k))
        assert shifted.per_band == base.per_band
        perm = rng.permutation(k)
        relabeled = annd(FilterArrayPattern(perm[cells], k))
        assert relabeled.per_band == tuple(base.per_band[f] for f in np.argsort(perm))
        assert relabeled.overall == pytest.approx(base.overall, rel=1e-15)


class TestAnnealing:
    def test_exhaustive_2x2_two_filters(self):
        values = []
        for pair in itertools.combinations(range(4), 2):
            cells = np.ones(4, dtype=int)
            cells[list(pair)] = 0
            values.append(annd(FilterArrayPattern(cells.reshape(2, 2), 2)).overall)
        assert len(values) == 6 and min(values) == 0.5
        result = optimize_pattern(2, 2, 2, counts=[2, 2], seed=0)
        assert annd(result).overall == 0.5
        assert result.cells[0, 0] == result.cells[1, 1] != result.cells[0, 1]

    def test_exhaustive_4x4_four_filters(self):
        optimum = exhaustive_equal_counts(4, 4, 4)
        assert optimum == pytest.approx(0.75, abs=1e-12)
        result = optimize_pattern(4, 4, 4, counts=[4, 4, 4, 4], seed=0)
        assert annd(result).overall == pytest.approx(optimum, abs=1e-12)
        assert np.bincount(result.cells.ravel()).tolist() == [4, 4, 4, 4]

    @pytest.mark.parametrize("counts", [None, [2, 2, 2, 3]])
    def test_never_worse_than_initial(self, counts):
        for seed in range(3):
            res = anneal_pattern(3, 3, 4, counts=counts, seed=seed,
                                 schedule=AnnealingSchedule(patience=500))
            assert res.annd <= res.initial_annd + 1e-15
            assert set(res.pattern.cells.ravel().tolist()) == {0, 1, 2, 3}
            if counts:
                assert np.bincount(res.pattern.cells.ravel()).tolist() == counts

    def test_deterministic_per_seed(self):
        sched = AnnealingSchedule(patience=300)
        a = anneal_pattern(4, 4, 5, seed=3, schedule=sched)
        b = anneal_pattern(4, 4, 5, seed=3, schedule=sched)
        assert a.pattern == b.pattern and a.trace == b.trace

    def test_restarts_pick_lowest_seed_on_ties(self):
        res = best_of_restarts(2, 2, 2, counts=[2, 2], seed=5, restarts=3)
        assert res.seed == 5

    @pytest.mark.parametrize("args", [
        dict(k=5, counts=None),
        dict(k=2, counts=[2, 1]),
        dict(k=2, counts=[4, 0]),
        dict(k=2, counts=[1, 1, 2]),
        dict(k=0, counts=None),
    ])
    def test_infeasible(self, args):
        with pytest.raises(ConfigError):
            anneal_pattern(2, 2, args["k"], counts=args["counts"])

    def test_restarts_validated(self):
        with pytest.raises(ConfigError):
            optimize_pattern(2, 2, 2, restarts=0)


class TestPresets:
    def test_pol16(self):
        pattern, bank = preset_pattern("fig7-pol16")
        assert pattern.tile_shape == (4, 4)
        assert sorted(pattern.cells.ravel().tolist()) == list(range(16))
        assert isinstance(bank, PolarizedFilterBank) and bank.num_filters == 16
        assert sorted(set(np.round(bank.orientation_deg, 6).tolist())) == [0.0, 45.0, 90.0, 135.0]

    def test_brauers6(self):
        pattern, sens = preset_pattern("brauers6")
        assert pattern.cells.size == 6 and sorted(pattern.cells.ravel().tolist()) == list(range(6))
        assert isinstance(sens, SensitivityMatrix) and sens.num_filters == 6

    def test_monno5(self):
        pattern, _ = preset_pattern("monno5")
        counts = np.bincount(pattern.cells.ravel())
        assert counts.tolist() == [8, 2, 2, 2, 2]
        r, c = np.nonzero(pattern.cells == 0)
        assert np.all((r + c) % 2 == 0)

    def test_bayer(self):
        pattern, sens = preset_pattern("bayer")
        assert pattern.tile_shape == (2, 2) and sens.num_filters == 4

    def test_unknown(self):
        with pytest.raises(ConfigError):
            preset_pattern("nope")
