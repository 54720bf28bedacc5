"""Monte Carlo averaging with per-shot random streams.

Shot ``k`` draws from ``Philox(SeedSequence(seed, spawn_key=(k,)))``, a
counter-based generator keyed only by ``(seed, k)``. Shots are grouped in
fixed-size chunks that never depend on the thread count, and the reduction is
done in shot order, so results are bit-identical for any ``threads``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .._validation import check_count
from .integrators import PropagationError
from .noise import NoiseModel, sample_noise

CHUNK_SIZE = 256


class EnsembleError(RuntimeError):
    """A shot failed; ``shot`` is its index."""

    def __init__(self, message, shot):
        super().__init__(message)
        self.shot = shot


def shot_rng(seed, shot):
    """Independent generator for ``shot`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(shot),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    samples: np.ndarray | None = None


def _reduce(values, keep):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / np.sqrt(n)
    return EnsembleResult(mean, stderr, n, values if keep else None)


def run_shots(batch_fn, n, seed, *, threads=1, chunk_size=CHUNK_SIZE):
    """Evaluate ``batch_fn(shot_indices, rngs)`` over all shots in chunks.

    ``batch_fn`` returns an array whose first axis runs over the given shots.
    The stacked ``(n, ...)`` array is returned in shot order.
    """
    n = check_count(n, "n", minimum=1)
    threads = check_count(threads, "threads", minimum=1)
    starts = list(range(0, n, chunk_size))

    def work(start):
        idx = np.arange(start, min(n, start + chunk_size))
        rngs = [shot_rng(seed, k) for k in idx]
        try:
            return np.asarray(batch_fn(idx, rngs), dtype=float)
        except PropagationError as exc:
            shot = exc.shot if exc.shot is not None else int(idx[0])
            raise EnsembleError(f"shot {shot} failed: {exc}", shot) from exc

    if threads == 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    return np.concatenate(parts, axis=0)


def ensemble_average(experiment, model: NoiseModel, n, seed, *, duration, threads=1,
                     keep_samples=False, noise_dt=None):
    """Average ``experiment(path, rng)`` over ``n`` noise realizations.

    ``experiment`` receives one :class:`NoisePath` spanning ``duration`` and
    that shot's generator, and returns an array (one value per curve point).
    """
    n = check_count(n, "n", minimum=2)

    def batch(idx, rngs):
        out = []
        for k, rng in zip(idx, rngs):
            path = sample_noise(model, duration, rng, noise_dt)
            try:
                out.append(np.atleast_1d(experiment(path, rng)))
            except PropagationError as exc:
                exc.shot = int(k)
                raise
        return np.stack(out)

    return _reduce(run_shots(batch, n, seed, threads=threads), keep_samples)
