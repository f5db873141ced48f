"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line with its runtime
against the budget; the lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from snapmsi import (
    BandSampling,
    FilterArrayPattern,
    MultispectralImage,
    NoiseSpec,
    OptimizerConfig,
    PolarizedFilterBank,
    SensitivityMatrix,
    SpectralGrid,
    StokesCube,
    VtvConfig,
    annd,
    build_system_matrix,
    demosaic_bilinear,
    demosaic_interband,
    demosaic_ppi,
    demosaic_vtv,
    mosaic_adjoint,
    mosaic_apply,
    optimize_pattern,
    optimize_sensitivity,
    polarized_mosaic,
    polarized_system_matrix,
    preset_pattern,
    psnr,
    random_init_sensitivity,
    recover_stokes,
    validate,
    wiener_train,
)
from snapmsi.colorimetry import srgb_decode, srgb_encode, spectrum_to_xyz, xyz_to_srgb
from snapmsi.core import MosaickedImage
from snapmsi.forward import polarized_adjoint
from snapmsi.optimize import ReconstructionObjective, heldout_psnr
from snapmsi.synth import synth_cube, synth_stokes

from conftest import random_pattern, small_grid
from test_classic import tiles
from test_cli import pipeline
from test_optimize import oracle_mse
from test_patterns import brute_annd_plane, brute_annd_torus, exhaustive_equal_counts, random_cells
from test_stokes import BANK, GRID as POL_GRID, PATTERN as POL_PATTERN, oracle_recovery, rel_rmse
from test_vtv import TILE_2x4, two_region_fixture
from test_wiener import BAYER, oracle_matrices

RESULTS = []


class Criterion:
    """Collects named checks, then reports one line and fails on any miss."""

    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.failures, self.notes = [], []
        self.start = time.perf_counter()

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def note(self, text):
        self.notes.append(text)

    def finish(self, capsys):
        elapsed = time.perf_counter() - self.start
        self.check(elapsed < self.budget, f"runtime {elapsed:.1f}s over budget {self.budget}s")
        status = "PASS" if not self.failures else "FAIL"
        line = f"criterion {self.number}: {status} {self.title} ({elapsed:.2f}s / {self.budget}s)"
        if self.notes:
            line += " " + "; ".join(self.notes)
        if self.failures:
            line += " | failed: " + "; ".join(self.failures)
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert not self.failures, line


def test_criterion_01_adjoint_identity(capsys):
    c = Criterion(1, "adjoint identity, 100 instances", 1.0)
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        h, w = (int(v) for v in rng.integers(1, 17, 2))
        L = int(rng.integers(1, 9))
        th, tw = int(rng.integers(1, min(h, 4) + 1)), int(rng.integers(1, min(w, 4) + 1))
        h, w = th * max(1, h // th), tw * max(1, w // tw)
        k = int(rng.integers(1, th * tw + 1))
        pattern = random_pattern(rng, th, tw, k)
        g = small_grid(L)
        sens = SensitivityMatrix(rng.uniform(0, 1, (k, L)), g)
        x = MultispectralImage(rng.uniform(0, 1, (h, w, L)), g)
        y = MosaickedImage(rng.uniform(0, 1, (h, w)))
        lhs = float(np.sum(mosaic_apply(x, pattern, sens).data * y.data))
        rhs = float(np.sum(x.data * mosaic_adjoint(y, pattern, sens).data))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    c.check(worst <= 1e-10, f"worst relative gap {worst:.2e}")
    c.note(f"worst relative gap {worst:.1e}")
    c.finish(capsys)


def test_criterion_02_operator_matrix_equivalence(capsys):
    c = Criterion(2, "operators match dense system matrices on 4x4", 1.0)
    rng = np.random.default_rng(2)
    g = small_grid(5)
    worst = 0.0
    for pattern in (FilterArrayPattern([[0, 1], [2, 3]], 4), random_pattern(rng, 4, 4, 6), FilterArrayPattern([[0]], 1)):
        k = pattern.num_filters
        sens = SensitivityMatrix(rng.uniform(0, 1, (k, 5)), g)
        x = MultispectralImage(rng.uniform(0, 1, (4, 4, 5)), g)
        A = build_system_matrix(pattern, sens, 4, 4)
        worst = max(worst, float(np.max(np.abs(A @ x.data.ravel() - mosaic_apply(x, pattern, sens).data.ravel()))))
    for th, tw in ((2, 2), (4, 4)):
        k = th * tw
        bank = PolarizedFilterBank(rng.uniform(0, 1, (k, 5)), rng.uniform(0, 1, (k, 5)), rng.uniform(0, 180, k), g)
        pattern = FilterArrayPattern(np.arange(k).reshape(th, tw), k)
        s0 = rng.uniform(0.1, 1, (4, 4, 5))
        s = StokesCube(s0, 0.3 * s0, -0.2 * s0, g)
        A = polarized_system_matrix(bank, pattern, 4, 4)
        worst = max(worst, float(np.max(np.abs(A @ s.stacked().ravel() - polarized_mosaic(s, bank, pattern).data.ravel()))))
        yv = rng.standard_normal((4, 4))
        adj = polarized_adjoint(MosaickedImage(yv), bank, pattern).stacked().ravel()
        worst = max(worst, float(np.max(np.abs(A.T @ yv.ravel() - adj))))
    c.check(worst <= 1e-12, f"max deviation {worst:.2e}")
    c.note(f"max deviation {worst:.1e}")
    c.finish(capsys)


def test_criterion_03_wiener_oracle(capsys):
    c = Criterion(3, "Wiener matrices match normal-equations oracle", 10.0)
    g = small_grid(6)
    cubes = [synth_cube(12, 12, g, 4, 3.0, seed=i) for i in range(50)]
    sens = SensitivityMatrix(np.random.default_rng(7).uniform(0.05, 0.95, (4, 6)), g)
    model = wiener_train(cubes, BAYER, sens, noise_sigma=0.0, window_tiles=3, ridge=1e-6)
    mosaics = [mosaic_apply(x, BAYER, sens).data for x in cubes]
    oracle = oracle_matrices(mosaics, [x.data for x in cubes], BAYER, 3, 1e-6)
    worst = 0.0
    for (a, b), W in oracle.items():
        worst = max(worst, float(np.linalg.norm(model.matrices[a, b] - W) / np.linalg.norm(W)))
    c.check(worst <= 1e-6, f"relative Frobenius {worst:.2e}")
    c.note(f"worst relative Frobenius {worst:.1e}")
    c.finish(capsys)


def test_criterion_04_annd_oracle(capsys):
    c = Criterion(4, "ANND equals brute force on all tiles up to 6x6", 5.0)
    rng = np.random.default_rng(4)
    checked = 0
    for h in range(1, 7):
        for w in range(1, 7):
            for k in sorted({1, min(3, h * w), h * w}):
                cells = random_cells(rng, h, w, k)
                rep = annd(FilterArrayPattern(cells, k))
                per_band, overall = brute_annd_torus(cells, k)
                c.check(list(rep.per_band) == per_band and rep.overall == overall, f"torus {h}x{w} K={k}")
                c.check(rep.overall == brute_annd_plane(cells, k)[1], f"plane {h}x{w} K={k}")
                checked += 1
    bayer = annd(FilterArrayPattern([[0, 1], [2, 3]], 4)).overall
    c.check(abs(bayer - (2 + math.sqrt(2)) / 4) <= 1e-15, f"2x2/K=4 gave {bayer!r}")
    c.note(f"{checked} patterns, 2x2/K=4 = {bayer:.15f}")
    c.finish(capsys)


def test_criterion_05_annealing_optimality(capsys):
    c = Criterion(5, "annealing reaches exhaustive optimum", 60.0)
    opt22 = exhaustive_equal_counts(2, 2, 2)
    got22 = annd(optimize_pattern(2, 2, 2, counts=[2, 2], seed=0)).overall
    c.check(abs(got22 - opt22) <= 1e-12, f"2x2/K=2: {got22} vs {opt22}")
    opt44 = exhaustive_equal_counts(4, 4, 4)
    got44 = annd(optimize_pattern(4, 4, 4, counts=[4, 4, 4, 4], seed=0)).overall
    c.check(abs(got44 - opt44) <= 1e-12, f"4x4/K=4: {got44} vs {opt44}")
    c.note(f"2x2/K=2 {got22:.6f} (opt {opt22:.6f}), 4x4/K=4 {got44:.6f} (opt {opt44:.6f})")
    c.finish(capsys)


@pytest.mark.slow
def test_criterion_06_joint_optimization(capsys):
    c = Criterion(6, "joint sensitivity optimization", 600.0)
    grid = SpectralGrid(420, 20, 16)
    train = [synth_cube(32, 32, grid, 4, 3.0, seed=i) for i in range(20)]
    held = [synth_cube(32, 32, grid, 4, 3.0, seed=100 + i) for i in range(4)]
    pattern = FilterArrayPattern(np.arange(16).reshape(4, 4), 16)
    init = random_init_sensitivity(16, grid, seed=0)
    sigma = 0.01

    # (b) forward differences against an independent central-difference oracle
    cfg_fd = OptimizerConfig(noise_sigma=sigma, window_tiles=1, smoothness_weight=0.0)
    obj = ReconstructionObjective(train, pattern, grid, cfg_fd)
    S = init.values.copy()
    f0 = obj.mse(S)
    h = cfg_fd.fd_step
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10):
        idx = (int(rng.integers(16)), int(rng.integers(16)))
        Sp, Sm = S.copy(), S.copy()
        Sp[idx] += h
        Sm[idx] -= h
        central = (oracle_mse(train, pattern, Sp, sigma, 0, 1, cfg_fd.ridge)
                   - oracle_mse(train, pattern, Sm, sigma, 0, 1, cfg_fd.ridge)) / (2 * h)
        worst = max(worst, abs(obj.mse_partial(S, idx, f0) - central) / abs(central))
    c.check(worst <= 1e-4, f"gradient relative error {worst:.2e}")

    # (a) and (c)
    cfg = OptimizerConfig(noise_sigma=sigma, window_tiles=1, max_outer_iters=30)
    before = heldout_psnr(wiener_train(train, pattern, init, sigma, 1, cfg.ridge, cfg.seed), init, held, sigma)
    sens, model, trace = optimize_sensitivity(train, pattern, init, cfg)
    after = heldout_psnr(model, sens, held, sigma)
    accepted = trace.accepted()
    mse_seq = [r.objective for r in accepted]
    total_seq = [r.total for r in accepted]
    c.check(all(b <= a for a, b in zip(mse_seq, mse_seq[1:])), "accepted MSE increased")
    c.check(all(b < a for a, b in zip(total_seq, total_seq[1:])), "accepted objective did not decrease")
    c.check(after - before >= 0.5, f"held-out gain {after - before:.2f} dB")
    c.note(f"grad err {worst:.1e}, {len(accepted) - 1} accepted steps ({trace.stop_reason}), "
           f"held-out PSNR {before:.2f} -> {after:.2f} dB")
    c.finish(capsys)


def test_criterion_07_vtv(capsys):
    c = Criterion(7, "VTV fixed point, monotone objective, beats bilinear", 120.0)
    g = small_grid(4)
    p = FilterArrayPattern([[0, 1], [2, 3]], 4)
    delta = SensitivityMatrix.delta(g)
    xc = MultispectralImage(np.broadcast_to([0.2, 0.5, 0.7, 0.9], (8, 8, 4)), g)
    res = demosaic_vtv(mosaic_apply(xc, p, delta), p, delta, VtvConfig(lam=0.05, max_iters=200))
    err = float(np.max(np.abs(res.image.data - xc.data)))
    c.check(err <= 1e-6, f"constant cube error {err:.2e}")

    x = two_region_fixture()
    sens = SensitivityMatrix.delta(x.grid)
    y = mosaic_apply(x, TILE_2x4, sens, NoiseSpec(0.01, 0))
    run = demosaic_vtv(y, TILE_2x4, sens, VtvConfig(lam=0.02, max_iters=300))
    hist = np.array(run.history)
    c.check(bool(np.all(np.diff(hist[10:]) <= 0)), "objective increased after iteration 10")
    ours = psnr(x, run.image)
    bil = psnr(x, demosaic_bilinear(y, BandSampling.identity(TILE_2x4, x.grid)))
    c.check(ours >= bil, f"VTV {ours:.2f} dB < bilinear {bil:.2f} dB")
    c.note(f"fixed-point err {err:.1e}, VTV {ours:.2f} dB vs bilinear {bil:.2f} dB")
    c.finish(capsys)


def test_criterion_08_classic(capsys):
    c = Criterion(8, "classic demosaickers: constants, samples, translation", 10.0)
    methods = {"bilinear": demosaic_bilinear, "ibd": demosaic_interband, "ppi": demosaic_ppi}
    rng = np.random.default_rng(8)
    worst = 0.0
    for pattern in tiles():
        g = SpectralGrid(420, 10, pattern.num_filters)
        sampling = BandSampling.identity(pattern, g)
        delta = SensitivityMatrix.delta(g)
        th, tw = pattern.tile_shape
        H, W = 6 * th, 6 * tw
        const = MultispectralImage(np.broadcast_to(np.linspace(0.2, 0.9, g.count), (H, W, g.count)), g)
        xr = rng.uniform(0, 1, (H, W, g.count))
        y = mosaic_apply(MultispectralImage(xr, g), pattern, delta)
        masks = sampling.masks(H, W)
        for name, fn in methods.items():
            tag = f"{name} {th}x{tw}"
            e = float(np.max(np.abs(fn(mosaic_apply(const, pattern, delta), sampling).data - const.data)))
            worst = max(worst, e)
            c.check(e <= 1e-9, f"{tag} constant error {e:.1e}")
            out = fn(y, sampling).data
            c.check(all(np.array_equal(out[:, :, b][masks[:, :, b]], y.data[masks[:, :, b]]) for b in range(g.count)),
                    f"{tag} samples changed")
            shifted = np.roll(xr, (th, 2 * tw), axis=(0, 1))
            out_s = fn(mosaic_apply(MultispectralImage(shifted, g), pattern, delta), sampling).data
            c.check(np.array_equal(out_s, np.roll(out, (th, 2 * tw), axis=(0, 1))), f"{tag} not equivariant")
    c.note(f"worst constant-cube error {worst:.1e}")
    c.finish(capsys)


def test_criterion_09_polarization(capsys):
    c = Criterion(9, "polarized capture identities and Stokes recovery", 120.0)
    L = POL_GRID.count
    rng = np.random.default_rng(9)
    s0 = np.broadcast_to(rng.uniform(0.1, 1, L), (8, 8, L))
    zero = np.zeros_like(s0)
    y = polarized_mosaic(StokesCube(s0, zero, zero, POL_GRID), BANK, POL_PATTERN).data
    spread = max(float(np.ptp(y[r::4, :])) for r in range(4))
    c.check(spread <= 1e-12, f"unpolarized spread {spread:.1e}")

    dop, ang = 0.7, 0.4
    s = StokesCube(s0, dop * s0 * math.cos(2 * ang), dop * s0 * math.sin(2 * ang), POL_GRID)
    yp = polarized_mosaic(s, BANK, POL_PATTERN).data
    gap = 0.0
    for pitch in range(4):
        total = float(np.sum((BANK.t_te[4 * pitch] + BANK.t_tm[4 * pitch]) * s0[0, 0]))
        for a, b in ((0, 2), (1, 3)):  # 0/90 and 45/135 degree columns
            gap = max(gap, float(np.max(np.abs(yp[pitch::4, a::4] + yp[pitch::4, b::4] - total))))
    c.check(gap <= 1e-12, f"orthogonal-pair gap {gap:.1e}")

    smooth = synth_stokes(16, 16, POL_GRID, 4, 3.0, dop=0.6, aolp=0.0, seed=3)
    ys = polarized_mosaic(smooth, BANK, POL_PATTERN)
    est = recover_stokes(ys, BANK, POL_PATTERN, "ridge", basis_dim=4, ridge=1e-8, project=False)
    err = rel_rmse(est.stacked(), oracle_recovery(ys.data))
    c.check(err < 1e-3, f"relative RMSE to oracle {err:.2e}")

    for seed, sigma in ((0, 0.0), (1, 0.02), (2, 0.1)):
        scene = synth_stokes(8, 8, POL_GRID, 4, 2.0, dop=0.9, aolp=1.0, seed=seed)
        out = recover_stokes(polarized_mosaic(scene, BANK, POL_PATTERN, NoiseSpec(sigma, seed)), BANK, POL_PATTERN,
                             "ridge", basis_dim=4, ridge=1e-6)
        c.check(validate(out) == [], f"cone violated (seed {seed})")
    c.note(f"spread {spread:.1e}, pair gap {gap:.1e}, oracle rel RMSE {err:.1e}")
    c.finish(capsys)


def test_criterion_10_colorimetry(capsys):
    c = Criterion(10, "white renders white, gamma round trip", 1.0)
    rgb = xyz_to_srgb(spectrum_to_xyz(np.ones(31)))
    dev = float(np.max(np.abs(rgb - 1.0)))
    c.check(dev <= 1 / 255, f"white deviation {dev:.2e}")
    v = np.linspace(0, 1, 100_001)
    rt = float(np.max(np.abs(srgb_decode(srgb_encode(v)) - v)))
    c.check(rt <= 1e-12, f"gamma round trip {rt:.1e}")
    c.note(f"white deviation {dev:.1e}, gamma round trip {rt:.1e}")
    c.finish(capsys)


def test_criterion_11_reproducibility(capsys, tmp_path):
    c = Criterion(11, "every CLI command byte-reproducible", 300.0)
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    pipeline(capsys, a)
    pipeline(capsys, b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    c.check(files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file()), "file sets differ")
    differing = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    c.check(not differing, f"differing outputs: {differing}")
    c.note(f"{len(files)} output files compared")
    c.finish(capsys)
