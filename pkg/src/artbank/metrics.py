"""Desk-scale quality metrics and the attention-encoder convergence benchmark.

Structure preservation is measured with SSIM over sliding 8x8 uniform
windows. Style affinity uses cosine similarity between Gram matrices of a
fixed, seeded random convolutional feature bank -- a stand-in for learned
embedding similarity that still separates the procedural style families.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import init_output_proj
from .bank import DEFAULT_VOCAB_SEED, StyleBankEntry, create_entry
from .data_io import ImageSample
from .diffusion import (ATTENTION_VARIANTS, Denoiser, NoiseSchedule,
                        ispb_eval_loss, train_ispb)
from .errors import ConfigError, DimensionError
from .seeding import derive_seed
from .tensor import im2col

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

GRAM_BANK_SEED = 2718
GRAM_CHANNELS = 16
MOVING_AVG_WINDOW = 100


def _window_means(x: np.ndarray, k: int) -> np.ndarray:
    """Means of all k x k windows of a 2-d array via an integral image."""
    c = np.cumsum(np.cumsum(x, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    sums = c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]
    return sums / (k * k)


def ssim(a: ImageSample, b: ImageSample) -> float:
    """Mean structural similarity over sliding windows and channels."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise DimensionError("ssim requires images of identical dimensions")
    k = min(SSIM_WINDOW, a.height, a.width)
    values = []
    for ch in range(a.channels):
        x = a.pixels[:, :, ch]
        y = b.pixels[:, :, ch]
        mu_x = _window_means(x, k)
        mu_y = _window_means(y, k)
        # Population (divisor N) second moments per window.
        var_x = _window_means(x * x, k) - mu_x * mu_x
        var_y = _window_means(y * y, k) - mu_y * mu_y
        cov = _window_means(x * y, k) - mu_x * mu_y
        num = (2.0 * (mu_x * mu_y) + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
        values.append(num / den)
    return float(np.mean(np.stack(values)))


@dataclass(frozen=True)
class FeatureBank:
    """Two frozen random 3x3 conv layers used for Gram-feature extraction."""

    conv1: np.ndarray  # (GRAM_CHANNELS, 3, 3, 3)
    conv2: np.ndarray  # (GRAM_CHANNELS, GRAM_CHANNELS, 3, 3)
    seed: int


def feature_bank(seed: int = GRAM_BANK_SEED) -> FeatureBank:
    rng = np.random.Generator(np.random.PCG64(seed))
    conv1 = rng.normal(0.0, 1.0 / math.sqrt(3 * 9),
                       size=(GRAM_CHANNELS, 3, 3, 3))
    conv2 = rng.normal(0.0, 1.0 / math.sqrt(GRAM_CHANNELS * 9),
                       size=(GRAM_CHANNELS, GRAM_CHANNELS, 3, 3))
    return FeatureBank(conv1=conv1, conv2=conv2, seed=seed)


_DEFAULT_BANK: FeatureBank | None = None


def _default_bank() -> FeatureBank:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = feature_bank()
    return _DEFAULT_BANK


def _conv_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    cout, cin, kh, kw = w.shape
    cols, (oh, ow) = im2col(x, kh, kw, pad=0)
    return (w.reshape(cout, cin * kh * kw) @ cols).reshape(cout, oh, ow)


def _gram_vector(img: ImageSample, fb: FeatureBank) -> np.ndarray:
    x = np.ascontiguousarray(img.pixels.transpose(2, 0, 1))
    if x.shape[0] == 1:
        x = np.repeat(x, 3, axis=0)
    f = np.maximum(_conv_valid(x, fb.conv1), 0.0)
    f = np.maximum(_conv_valid(f, fb.conv2), 0.0)
    flat = f.reshape(f.shape[0], -1)
    gram = (flat @ flat.T) / flat.shape[1]
    return gram.reshape(-1)


@dataclass(frozen=True)
class StyleScore:
    """Cosine similarity of Gram features, in [-1, 1]."""

    value: float


def signature_of(collection: Sequence[ImageSample],
                 fb: FeatureBank | None = None) -> np.ndarray:
    """Unit-normalized mean of per-image vectorized Gram matrices."""
    if not collection:
        raise ConfigError("signature requires a non-empty collection")
    fb = fb or _default_bank()
    mean = np.mean([_gram_vector(img, fb) for img in collection], axis=0)
    norm = float(np.linalg.norm(mean))
    return mean / norm if norm > 0.0 else mean


def gram_style_score(img: ImageSample, signature: np.ndarray,
                     fb: FeatureBank | None = None) -> StyleScore:
    fb = fb or _default_bank()
    vec = _gram_vector(img, fb)
    norm = float(np.linalg.norm(vec)) * float(np.linalg.norm(signature))
    if norm == 0.0:
        return StyleScore(0.0)
    return StyleScore(float(np.dot(vec, signature) / norm))


@dataclass
class ConvergenceReport:
    """Iterations-to-threshold for one attention variant across seeds."""

    variant: str
    seeds: list[int]
    iterations_to_threshold: list[int | None]
    threshold: float
    median_iters: int | None


def iterations_to_threshold(trace: Sequence[float], threshold_frac: float,
                            window: int = MOVING_AVG_WINDOW,
                            initial_loss: float | None = None) -> int | None:
    """First iteration whose trailing moving-average loss drops below
    ``threshold_frac`` times the initial loss.

    ``initial_loss`` should be a probe evaluation of the untrained entry;
    when omitted, the first window's mean stands in for it.
    """
    if len(trace) < window:
        return None
    arr = np.asarray(trace, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    moving = (csum[window:] - csum[:-window]) / window
    initial = moving[0] if initial_loss is None else initial_loss
    below = np.nonzero(moving < threshold_frac * initial)[0]
    if below.size == 0:
        return None
    return int(below[0]) + window  # 1-based iteration index


def _median_or_none(values: list[int | None]) -> int | None:
    """Median with non-converged runs treated as +inf; None if it lands on one."""
    ordered = sorted(values, key=lambda v: math.inf if v is None else v)
    n = len(ordered)
    if n % 2:
        return ordered[n // 2]
    lo, hi = ordered[n // 2 - 1], ordered[n // 2]
    if lo is None or hi is None:
        return None
    return (lo + hi) // 2


def _bench_one(d: Denoiser, collection: Sequence[ImageSample],
               sched: NoiseSchedule, variant: str, seed: int,
               loss_threshold: float, max_iters: int, channels: int,
               positions: int, lr: float, vocab_seed: int) -> int | None:
    entry = create_entry(f"bench-{variant}", "benchmark", channels, positions,
                         seed=derive_seed(seed, f"bench-entry-{variant}"))
    w_o = None
    if variant == "sanet":
        rng_wo = np.random.Generator(
            np.random.PCG64(derive_seed(seed, "sanet-output-proj")))
        w_o = init_output_proj(channels, rng_wo)
    initial = ispb_eval_loss(d, entry, collection, sched, seed=seed,
                             vocab_seed=vocab_seed, variant=variant, w_o=w_o)
    trace = train_ispb(d, entry, collection, sched, max_iters, seed=seed,
                       lr=lr, vocab_seed=vocab_seed, variant=variant, w_o=w_o)
    return iterations_to_threshold(trace, loss_threshold,
                                   initial_loss=initial)


def convergence_benchmark(d: Denoiser, collection: Sequence[ImageSample],
                          variants: Sequence[str], seeds: Sequence[int],
                          loss_threshold: float, max_iters: int, *,
                          sched: NoiseSchedule, channels: int = 64,
                          positions: int = 16, lr: float = 1e-3,
                          vocab_seed: int = DEFAULT_VOCAB_SEED,
                          max_workers: int = 1) -> list[ConvergenceReport]:
    """Train a fresh entry per (variant, seed) and report how many
    iterations each needs to cross the relative loss threshold."""
    if len(seeds) < 3:
        raise ConfigError("the benchmark needs at least 3 seeds")
    for v in variants:
        if v not in ATTENTION_VARIANTS:
            raise ConfigError(f"unknown attention variant: {v!r}")
    jobs = [(variant, seed) for variant in variants for seed in seeds]
    results: dict[tuple[str, int], int | None] = {}
    workers = max(1, min(max_workers, len(jobs)))
    if workers == 1:
        for variant, seed in jobs:
            results[(variant, seed)] = _bench_one(
                d, collection, sched, variant, seed, loss_threshold,
                max_iters, channels, positions, lr, vocab_seed)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                (variant, seed): pool.submit(
                    _bench_one, d, collection, sched, variant, seed,
                    loss_threshold, max_iters, channels, positions, lr,
                    vocab_seed)
                for variant, seed in jobs
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    reports = []
    for variant in variants:
        iters = [results[(variant, seed)] for seed in seeds]
        reports.append(ConvergenceReport(
            variant=variant, seeds=list(seeds), iterations_to_threshold=iters,
            threshold=loss_threshold, median_iters=_median_or_none(iters)))
    return reports


def write_convergence_csv(reports: Sequence[ConvergenceReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "iterations", "converged",
                         "threshold", "median_iterations"])
        for r in reports:
            median = "" if r.median_iters is None else r.median_iters
            for seed, iters in zip(r.seeds, r.iterations_to_threshold):
                writer.writerow([
                    r.variant, seed,
                    "" if iters is None else iters,
                    int(iters is not None), r.threshold, median,
                ])


def format_convergence_table(reports: Sequence[ConvergenceReport]) -> str:
    lines = [f"{'variant':<10} {'median iters':>12}  per-seed"]
    for r in reports:
        per_seed = ", ".join("n/c" if i is None else str(i)
                             for i in r.iterations_to_threshold)
        median = "n/c" if r.median_iters is None else str(r.median_iters)
        lines.append(f"{r.variant:<10} {median:>12}  [{per_seed}]")
    return "\n".join(lines)
