"""Acceptance suite: one test per shipping criterion, each printing a
single PASS/FAIL line (run with -s to see them live). Criteria with a
stated time budget also assert it.
"""

import os
import socket
import threading
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

from wavefuse.bench import run_bench, speedup_column
from wavefuse.cluster import WorkerServer, run_master
from wavefuse.fusion import (
    DwtReplace,
    Ihs,
    WeightedAverage,
    fuse,
    fuse_dwt,
    fuse_ihs,
    fuse_wa,
    resample_bilinear,
)
from wavefuse.imageio import quantize
from wavefuse.metrics import degrade, ergas, q_index, qnr
from wavefuse.tiling import fuse_tiled, plan_grid
from wavefuse.wavelet import (
    WaveletKind,
    d4_filters,
    dwt1d_forward,
    dwt1d_inverse,
    dwt2d_forward,
    dwt2d_inverse,
)

KINDS = (WaveletKind.HAAR, WaveletKind.DAUB4)


@contextmanager
def verdict(number: int, label: str):
    started = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"criterion {number} [{label}]: FAIL")
        raise
    print(f"criterion {number} [{label}]: PASS ({time.perf_counter() - started:.2f}s)")


def random_plane(rng, lo=4, hi=64, dtype=np.float32):
    h = int(rng.integers(lo // 2, hi // 2 + 1)) * 2
    w = int(rng.integers(lo // 2, hi // 2 + 1)) * 2
    return rng.uniform(0.0, 255.0, (h, w)).astype(dtype)


def random_scene(rng, size=64, bands=3):
    pan = rng.uniform(0.0, 255.0, (size, size)).astype(np.float32)
    ms = [
        rng.uniform(0.0, 255.0, (size // 2, size // 2)).astype(np.float32)
        for _ in range(bands)
    ]
    return pan, ms


def test_criterion_1_perfect_reconstruction():
    with verdict(1, "perfect reconstruction"):
        start = time.perf_counter()
        rng = np.random.default_rng(101)
        worst = {np.float32: 0.0, np.float64: 0.0}
        for _ in range(200):
            for dtype, bound in ((np.float32, 1e-4), (np.float64, 1e-9)):
                plane = random_plane(rng, dtype=dtype)
                for kind in KINDS:
                    back = dwt2d_inverse(dwt2d_forward(plane, kind), kind)
                    err = float(np.max(np.abs(back - plane)))
                    worst[dtype] = max(worst[dtype], err)
                    assert err <= bound, (kind, dtype, plane.shape, err)
        assert time.perf_counter() - start < 5.0
        print(
            f"  max error: {worst[np.float32]:.2e} (f32), "
            f"{worst[np.float64]:.2e} (f64)"
        )


def analysis_matrix(n: int, kind: WaveletKind) -> np.ndarray:
    """Dense matrix applying one forward transform level to a length-n signal."""
    mat = np.zeros((n, n))
    if kind is WaveletKind.HAAR:
        low, high = np.array([0.5, 0.5]), np.array([0.5, -0.5])
    else:
        bank = d4_filters()
        low, high = bank.analysis_low, bank.analysis_high
    for i in range(n // 2):
        for k, (lo, hi) in enumerate(zip(low, high)):
            mat[i, (2 * i + k) % n] += lo
            mat[n // 2 + i, (2 * i + k) % n] += hi
    return mat


def test_criterion_2_filter_correctness():
    with verdict(2, "filter values and dense-matrix oracle"):
        bank = d4_filters()
        root3 = np.sqrt(3.0)
        expected = np.array([1 + root3, 3 + root3, 3 - root3, 1 - root3])
        expected /= 4 * np.sqrt(2.0)
        assert np.max(np.abs(bank.analysis_low - expected)) <= 1e-12
        # quadrature mirror: g_k = (-1)^k h_{3-k}
        mirror = np.array([(-1) ** k * expected[3 - k] for k in range(4)])
        assert np.max(np.abs(bank.analysis_high - mirror)) <= 1e-12
        assert abs(bank.analysis_low.sum() - np.sqrt(2.0)) <= 1e-12
        assert abs(bank.analysis_high.sum()) <= 1e-12

        rng = np.random.default_rng(102)
        x = rng.uniform(0.0, 255.0, 8)
        for kind in KINDS:
            mat = analysis_matrix(8, kind)
            assert np.max(np.abs(dwt1d_forward(x, kind) - mat @ x)) <= 1e-9
            coeffs = mat @ x
            back = np.linalg.inv(mat) @ coeffs
            assert np.max(np.abs(dwt1d_inverse(coeffs, kind) - back)) <= 1e-9


def test_criterion_3_fusion_identities():
    with verdict(3, "fusion identities"):
        start = time.perf_counter()
        pan = np.full((8, 8), 100, dtype=np.float32)
        band = np.full((4, 4), 50, dtype=np.float32)
        for kind in KINDS:
            fused = quantize(fuse_dwt(pan, band, kind))
            assert np.all(np.abs(fused.astype(float) - 50.0) <= 0.5), kind

        # replacing the approximation with the image's own -> identity
        rng = np.random.default_rng(103)
        plane = rng.uniform(0.0, 255.0, (16, 16)).astype(np.float32)
        coeffs = dwt2d_forward(plane, WaveletKind.HAAR)
        own_ll = coeffs[:8, :8].copy()
        assert np.max(np.abs(fuse_dwt(plane, own_ll, WaveletKind.HAAR) - plane)) <= 1e-4

        # weighted-average degenerates
        pan200 = np.full((8, 8), 200, dtype=np.float32)
        ms100 = [np.full((4, 4), 100, dtype=np.float32)]
        assert np.all(fuse_wa(pan200, ms100, 0.5)[0] == 150.0)
        pan_rand = rng.uniform(0.0, 255.0, (8, 8)).astype(np.float32)
        assert np.array_equal(fuse_wa(pan_rand, ms100, 1.0)[0], pan_rand)

        # IHS degenerates
        ms_up = [
            rng.uniform(0.0, 255.0, (8, 8)).astype(np.float32) for _ in range(3)
        ]
        intensity = (ms_up[0] + ms_up[1] + ms_up[2]) / 3.0
        fused = fuse_ihs(intensity, ms_up)
        for got, want in zip(fused, ms_up):
            assert np.max(np.abs(got - want)) <= 1e-4
        gray = [np.full((4, 4), 10, dtype=np.float32)] * 3
        pan25 = np.full((8, 8), 25, dtype=np.float32)
        for got in fuse_ihs(pan25, gray):
            assert np.max(np.abs(got - 25.0)) <= 1e-4
        assert time.perf_counter() - start < 1.0


def border_distance(size: int, tile_w: int, tile_h: int) -> np.ndarray:
    """Per-pixel distance to the edge of the tile that owns the pixel."""
    local_x = np.arange(size) % tile_w
    local_y = np.arange(size) % tile_h
    dx = np.minimum(local_x, tile_w - 1 - local_x)
    dy = np.minimum(local_y, tile_h - 1 - local_y)
    return np.minimum(dy[:, None], dx[None, :])


def test_criterion_4_tiling_equivalence():
    with verdict(4, "tiled equals untiled"):
        start = time.perf_counter()
        rng = np.random.default_rng(104)
        exact_methods = (
            WeightedAverage(0.5),
            Ihs(),
            DwtReplace(WaveletKind.HAAR),
        )
        widest_band = 0
        any_difference = False
        for _ in range(10):
            pan, ms = random_scene(rng)
            for grid_dim in (2, 4):
                grid = plan_grid(64, 64, grid_dim, grid_dim)
                for method in exact_methods:
                    tiled = fuse_tiled(pan, ms, method, grid, workers=2)
                    untiled = fuse(pan, ms, method)
                    for a, b in zip(tiled, untiled):
                        assert np.array_equal(a, b), (method, grid_dim)

                method = DwtReplace(WaveletKind.DAUB4)
                tiled = fuse_tiled(pan, ms, method, grid, workers=2)
                untiled = fuse(pan, ms, method)
                dist = border_distance(64, 64 // grid_dim, 64 // grid_dim)
                for a, b in zip(tiled, untiled):
                    diff = np.abs(a - b)
                    assert np.max(diff[dist >= 4]) <= 1e-4
                    if np.any(diff > 1e-4):
                        any_difference = True
                        widest_band = max(
                            widest_band, int(np.max(dist[diff > 1e-4])) + 1
                        )
        # the band the longer filter actually disturbs, measured against
        # the untiled oracle; must stay inside the 4 px allowance
        assert any_difference, "border effect never materialized; mask untested"
        assert widest_band <= 4
        print(f"  measured border-band width: {widest_band} px")
        assert time.perf_counter() - start < 10.0


def test_criterion_5_distributed_determinism():
    with verdict(5, "distributed determinism"):
        start = time.perf_counter()
        rng = np.random.default_rng(105)
        pan, ms = random_scene(rng)
        grid = plan_grid(64, 64, 2, 2)
        method = DwtReplace(WaveletKind.DAUB4)
        local = fuse_tiled(pan, ms, method, grid, transfer_8bpp=True)

        def serve(server):
            thread = threading.Thread(target=server.serve_forever, daemon=True)
            thread.start()
            return thread

        worker_a, worker_b = WorkerServer(), WorkerServer()
        thread_a, thread_b = serve(worker_a), serve(worker_b)
        endpoints = [
            f"127.0.0.1:{worker_a.port}",
            f"127.0.0.1:{worker_b.port}",
        ]
        try:
            single = run_master(pan, ms, method, grid, endpoints[:1], task_timeout=10)
            double = run_master(pan, ms, method, grid, endpoints, task_timeout=10)
            for got, want in zip(single, local):
                assert got.dtype == np.uint8 and np.array_equal(got, want)
            for got, want in zip(double, local):
                assert np.array_equal(got, want)
        finally:
            worker_a.close()
            worker_b.close()
            thread_a.join(timeout=5)
            thread_b.join(timeout=5)

        class Stalling(WorkerServer):
            """Sleeps before each task so tiles are in flight when killed."""

            def __init__(self):
                super().__init__()
                self.tasks_seen = 0

            def handle_task(self, tile, task_method):
                self.tasks_seen += 1
                time.sleep(0.5)
                return super().handle_task(tile, task_method)

        steady, doomed = Stalling(), Stalling()
        thread_c, thread_d = serve(steady), serve(doomed)
        killer = threading.Timer(0.2, doomed.close)
        killer.start()
        try:
            survived = run_master(
                pan,
                ms,
                method,
                grid,
                [f"127.0.0.1:{steady.port}", f"127.0.0.1:{doomed.port}"],
                task_timeout=10,
            )
            assert doomed.tasks_seen >= 1, "kill happened after the job drained"
            for got, want in zip(survived, local):
                assert np.array_equal(got, want)
        finally:
            killer.cancel()
            steady.close()
            doomed.close()
            thread_c.join(timeout=5)
            thread_d.join(timeout=5)
        assert time.perf_counter() - start < 30.0


def test_criterion_6_metric_identities():
    with verdict(6, "metric identities"):
        rng = np.random.default_rng(106)
        ms = [rng.uniform(0.0, 255.0, (8, 8)) for _ in range(3)]
        consistent = [band.repeat(2, axis=0).repeat(2, axis=1) for band in ms]
        assert ergas(consistent, ms, 2) == 0.0

        x = rng.uniform(0.0, 255.0, (16, 16))
        assert abs(q_index(x, x) - 1.0) <= 1e-12
        quadruple = np.array([[1.0, 2.0, 3.0, 4.0]])
        assert abs(q_index(quadruple, 2 * quadruple) - 0.64) <= 1e-9

        for _ in range(100):
            pan = rng.uniform(0.0, 255.0, (16, 16))
            bands = [rng.uniform(0.0, 255.0, (8, 8)) for _ in range(3)]
            fused = [rng.uniform(0.0, 255.0, (16, 16)) for _ in range(3)]
            report = qnr(fused, bands, pan)
            assert 0.0 <= report.qnr <= 1.0

        mu = [np.full((4, 4), 100.0)]
        offset = [np.full((8, 8), 105.0)]
        assert abs(ergas(offset, mu, 2) - 2.5) <= 1e-9


def wald_scene(size=512, seed=107):
    """Reference bands with spatial structure, downsampled into inputs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    reference = []
    for k in range(3):
        waves = (
            np.sin(xx * (0.03 + 0.011 * k))
            + np.cos(yy * (0.02 + 0.009 * k))
            + 0.5 * np.sin((xx + yy) * 0.017)
        )
        noise = rng.normal(0.0, 0.2, (size, size))
        band = 120.0 + 45.0 * waves / 2.5 + 10.0 * noise
        reference.append(np.clip(band, 0.0, 255.0).astype(np.float32))
    pan = (reference[0] + reference[1] + reference[2]) / 3.0
    ms_inputs = [degrade(band, 2) for band in reference]
    return pan.astype(np.float32), ms_inputs


def test_criterion_7_quality_ordering():
    with verdict(7, "quality ordering at desk scale"):
        pan, ms = wald_scene()
        scores = {}
        for name, method in (
            ("hdwt", DwtReplace(WaveletKind.HAAR)),
            ("wa", WeightedAverage(0.5)),
        ):
            fused = fuse(pan, ms, method)
            scores[name] = ergas(fused, ms, 2)
        print(
            f"  ergas hdwt={scores['hdwt']:.4f} wa={scores['wa']:.4f}"
        )
        if not scores["hdwt"] < scores["wa"]:
            warnings.warn(
                "soft criterion: expected hdwt ergas below wa, got "
                f"{scores['hdwt']:.4f} vs {scores['wa']:.4f}"
            )


def test_criterion_8_scaling():
    cores = os.cpu_count() or 1
    if cores < 4:
        print(f"criterion 8 [scaling]: SKIP (only {cores} cpu cores)")
        pytest.skip(f"needs >= 4 cores, host has {cores}")
    with verdict(8, "scaling"):
        start = time.perf_counter()
        rows = run_bench([(4070, 3736)], ["hdwt"], [(2, 2)], [1, 4], reps=3)
        speedup = speedup_column(rows)[1]
        print(f"  hdwt 4 workers vs 1: speedup {speedup:.2f}")
        if speedup < 1.5:
            warnings.warn(f"speedup {speedup:.2f} below 1.5; machine loaded?")
        assert speedup >= 1.0
        assert time.perf_counter() - start < 120.0
