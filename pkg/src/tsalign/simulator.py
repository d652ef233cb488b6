"""Consumer-domain simulator.

Turns a labeled clinical patch into an unlabeled consumer-grade patch in two
stages: (1) score-driven iterative anonymization, injecting Gaussian noise
with a growing scale until the patient identifier's confidence in the true
identity drops below a threshold, then (2) smoothing, magnitude rescaling,
and random masking. The target patch keeps patient/GA metadata for
evaluation only and is flagged domain=target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np

from .datamodel import Domain, RunConfig, TimeSeriesPatch
from .errors import ConfigurationError
from .seeding import derive_rng, derive_seed

Scorer = Callable[[TimeSeriesPatch], float]


@dataclass(frozen=True)
class AnonymizationTrace:
    iterations_used: int
    s_base: float
    s_thresh: float
    final_score: float
    noise_scales: Tuple[float, ...]


@dataclass(frozen=True)
class SimulationTrace:
    patch_id: str
    anonymization: AnonymizationTrace
    smoothing_window: int
    rescale_factor: float
    masked_fraction: float

    def to_json_line(self) -> str:
        a = self.anonymization
        return json.dumps({
            "patch_id": self.patch_id,
            "iterations_used": a.iterations_used,
            "s_base": a.s_base,
            "s_thresh": a.s_thresh,
            "final_score": a.final_score,
            "noise_scales": list(a.noise_scales),
            "rescale_factor": self.rescale_factor,
            "masked_fraction": self.masked_fraction,
        }, sort_keys=True)


def score(identifier, patch: TimeSeriesPatch, encoder, true_id: str = None) -> float:
    """Identifier's predicted probability of the true patient for this patch."""
    if true_id is None:
        true_id = patch.patient_id
    idx = identifier.label_index(true_id)
    record = encoder.embed(patch)
    return float(identifier.predict_proba(record.vector)[idx])


def make_patient_scorer(identifier, encoder) -> Scorer:
    """Bind identifier + encoder into the patch -> score callable used by
    :func:`anonymize`; the true identity is taken from the patch itself."""
    return lambda patch: score(identifier, patch, encoder)


def anonymize(patch: TimeSeriesPatch, scorer: Scorer, delta: float,
              n_max: int, sigma: float, seed: int):
    """Iterative noise injection until the identity score drops enough.

    Checks the score before injecting at each iteration i = 1..n_max; noise
    at iteration i is N(0, sigma*(1 + i/n_max)) added elementwise, clamped
    at zero. Returns the first patch whose score reaches
    s_base*(1 - delta), or the n_max-iteration result.
    """
    if not 0.0 <= delta <= 1.0:
        raise ConfigurationError(f"delta must lie in [0,1], got {delta}")
    if n_max < 1:
        raise ConfigurationError(f"n_max must be >= 1, got {n_max}")
    if sigma <= 0.0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")

    s_base = float(scorer(patch))
    s_thresh = s_base * (1.0 - delta)
    rng = derive_rng(seed, "anonymize-noise")

    current = patch
    s = s_base
    injections = 0
    scales = []
    for i in range(1, n_max + 1):
        if s <= s_thresh:
            break
        scale = sigma * (1.0 + i / n_max)
        scales.append(scale)
        noisy = current.values.astype(np.float64) \
            + rng.normal(0.0, scale, size=len(current))
        current = current.with_values(np.maximum(noisy, 0.0))
        injections += 1
        s = float(scorer(current))

    trace = AnonymizationTrace(
        iterations_used=injections,
        s_base=s_base,
        s_thresh=s_thresh,
        final_score=s,
        noise_scales=tuple(scales),
    )
    return current, trace


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; window shrinks at the edges."""
    values = np.asarray(values)
    if window < 1 or window % 2 == 0:
        raise ConfigurationError(
            f"smoothing window must be odd and >= 1, got {window}")
    n = values.shape[0]
    if window > n:
        raise ConfigurationError(
            f"smoothing window {window} exceeds length {n}")
    if window == 1:
        return values
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(values, dtype=np.float64)])
    idx = np.arange(n)
    starts = np.maximum(0, idx - half)
    ends = np.minimum(n, idx + half + 1)
    return (csum[ends] - csum[starts]) / (ends - starts)


def rescale(values: np.ndarray, factor_range, seed: int):
    """Multiply all values by one factor drawn uniformly from factor_range.

    Returns (rescaled values, drawn factor) so the factor can be logged.
    """
    low, high = factor_range
    if not 0.0 < low <= high:
        raise ConfigurationError(
            f"rescale range must satisfy 0 < low <= high, got ({low}, {high})")
    factor = float(derive_rng(seed, "rescale").uniform(low, high))
    return np.asarray(values) * factor, factor


def mask(values: np.ndarray, mask_fraction: float, min_run: int, max_run: int,
         seed: int):
    """Zero out disjoint runs until at least mask_fraction of samples are
    inside masked runs; a colliding draw is redrawn whole.

    Returns (masked values, achieved masked share).
    """
    values = np.asarray(values)
    n = values.shape[0]
    if not 0.0 <= mask_fraction < 1.0:
        raise ConfigurationError(
            f"mask_fraction must lie in [0,1), got {mask_fraction}")
    if not 1 <= min_run <= max_run <= n:
        raise ConfigurationError(
            f"need 1 <= min_run <= max_run <= length, got "
            f"({min_run}, {max_run}, {n})")
    if mask_fraction == 0.0:
        return values, 0.0

    rng = derive_rng(seed, "mask")
    masked = np.zeros(n, dtype=bool)
    total = 0
    rejected = 0
    while total < mask_fraction * n:
        run = int(rng.integers(min_run, max_run + 1))
        start = int(rng.integers(0, n - run + 1))
        if masked[start:start + run].any():
            rejected += 1
            if rejected > 100_000:
                raise ConfigurationError(
                    "could not place disjoint mask runs; lower mask_fraction "
                    "or run lengths")
            continue
        masked[start:start + run] = True
        total += run
    out = values.copy()
    out[masked] = 0
    return out, total / n


def simulate_target(patch: TimeSeriesPatch, scorer: Scorer, config: RunConfig,
                    seed: int):
    """Full pipeline: anonymize -> smooth -> rescale -> mask, in that order.

    The per-stage seeds derive from (seed, patch_id, stage), so patches can
    be simulated in any order or in parallel without changing output.
    """
    if config.noise_sigma_adaptive:
        sigma = config.noise_sigma * float(np.std(patch.values))
    else:
        sigma = config.noise_sigma
    sigma = max(sigma, 1e-9)

    anon, anon_trace = anonymize(
        patch, scorer, config.delta, config.n_max, sigma,
        seed=derive_seed(seed, patch.patch_id, "anonymize"))
    vals = smooth(anon.values, config.smoothing_window)
    vals, factor = rescale(vals, config.rescale_range,
                           seed=derive_seed(seed, patch.patch_id, "rescale"))
    vals, share = mask(vals, config.mask_fraction, config.mask_min_run,
                       config.mask_max_run,
                       seed=derive_seed(seed, patch.patch_id, "mask"))

    target = TimeSeriesPatch(
        patch_id=patch.patch_id,
        patient_id=patch.patient_id,
        domain=Domain.TARGET,
        values=vals,
        ga_weeks=patch.ga_weeks,  # evaluation only; sealed before training
        patch_start_day=patch.patch_start_day,
    )
    trace = SimulationTrace(
        patch_id=patch.patch_id,
        anonymization=anon_trace,
        smoothing_window=config.smoothing_window,
        rescale_factor=factor,
        masked_fraction=share,
    )
    return target, trace


def simulate_cohort(patches: Sequence[TimeSeriesPatch], scorer: Scorer,
                    config: RunConfig, seed: int):
    targets, traces = [], []
    for patch in patches:
        t, tr = simulate_target(patch, scorer, config, seed)
        targets.append(t)
        traces.append(tr)
    return targets, traces
