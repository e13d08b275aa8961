"""Shared helpers for the test suite."""

import math

import numpy as np

from srvfmotion.geometry import Curve, LandmarkSequence, Srvf


def random_srvf(rng, m=15, dim=4) -> Srvf:
    q = rng.standard_normal((m, dim))
    return Srvf(q / math.sqrt(np.sum(q * q) / m))


def random_curve(rng, t=16, dim=4, scale=1.0) -> Curve:
    steps = rng.standard_normal((t - 1, dim)) * scale
    samples = np.concatenate([np.zeros((1, dim)), np.cumsum(steps, axis=0)])
    return Curve(samples + rng.standard_normal(dim))


def smooth_curve(rng, t=32, dim=4, modes=2, amp=0.1) -> Curve:
    """Low-frequency Fourier mixture with drift, so velocity never vanishes."""
    times = np.linspace(0.0, 1.0, t)
    drift = rng.uniform(1.0, 2.0, dim) * rng.choice([-1.0, 1.0], dim)
    samples = times[:, None] * drift
    for k in range(1, modes + 1):
        amps = amp * rng.standard_normal(dim) / (k * k)
        phase = rng.uniform(0.0, 2.0 * np.pi, dim)
        samples = samples + amps * np.sin(np.pi * k * times[:, None] + phase)
    return Curve(samples)


def smooth_srvf(rng, m=31, dim=4):
    from srvfmotion.geometry import srvf_encode

    return srvf_encode(smooth_curve(rng, t=m + 1, dim=dim))


def sinusoid_sequence(t=16, d=2, amp=1.0, freq=1.0, phase=0.0) -> LandmarkSequence:
    """Per-landmark sinusoidal displacement from a fixed base configuration."""
    base = np.stack([np.linspace(0.0, 1.0, d), np.zeros(d)], axis=1)
    times = np.linspace(0.0, 1.0, t)
    frames = np.empty((t, d, 2))
    for k, tt in enumerate(times):
        off = amp * math.sin(math.pi * freq * tt + phase)
        frames[k] = base + np.array([0.3 * off, off])
    return LandmarkSequence(frames)


def srvf_pointwise_oracle(samples):
    """Independent scalar transcription of the square-root velocity map.

    Velocity by forward differences, q = v / sqrt(||v||) per interval, then a
    global rescale to unit dt-weighted L2 norm.  Pure-Python loops on lists,
    no shared code with the library implementation.
    """
    t = len(samples)
    dim = len(samples[0])
    dt = 1.0 / (t - 1)
    q = []
    for k in range(t - 1):
        vel = [(samples[k + 1][i] - samples[k][i]) / dt for i in range(dim)]
        speed = math.sqrt(sum(v * v for v in vel))
        if speed == 0.0:
            q.append([0.0] * dim)
        else:
            q.append([v / math.sqrt(speed) for v in vel])
    total = math.sqrt(sum(sum(x * x for x in row) for row in q) * dt)
    return [[x / total for x in row] for row in q]
