"""Square-root velocity encoding of landmark motions and the geometry of the
unit hypersphere the encodings live on.

A motion of ``d`` 2-D landmarks over ``T`` frames is flattened to a curve in
R^(2d) sampled at T uniform instants of [0, 1].  Its square-root velocity
function (SRVF) is sampled once per inter-frame interval and rescaled to unit
L2 norm, so every motion becomes a single point on the unit hypersphere S.
All inner products are dt-weighted (dt = 1/(T-1)) so norms approximate the
continuous L2 norm and stay comparable across T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AntipodalPoint, DegenerateCurve, ShapeMismatch

EPS_VEL = 1e-12        # inter-frame displacement below this is treated as zero
EPS_SMALL = 1e-7       # switch to first-order limits of log/exp
EPS_ANTIPODAL = 1e-6   # log map rejected within this angle of the antipode


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LandmarkSequence:
    """T frames of d 2-D landmark points, optionally labeled."""

    frames: np.ndarray          # (T, d, 2)
    label: object = None        # ExpressionLabel or None
    seq_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 2:
            raise ShapeMismatch(f"frames must be (T, d, 2), got {frames.shape}")
        if frames.shape[0] < 2:
            raise ShapeMismatch("a landmark sequence needs at least 2 frames")
        if frames.shape[1] < 1:
            raise ShapeMismatch("a landmark sequence needs at least 1 landmark")
        if not np.all(np.isfinite(frames)):
            raise ShapeMismatch("landmark coordinates must be finite")
        object.__setattr__(self, "frames", _frozen(frames))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_landmarks(self) -> int:
        return self.frames.shape[1]

    def to_curve(self) -> "Curve":
        return Curve(self.frames.reshape(self.n_frames, -1))


@dataclass(frozen=True)
class Curve:
    """A motion flattened to T points of R^(2d), uniformly sampled on [0, 1]."""

    samples: np.ndarray         # (T, 2d)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 2:
            raise ShapeMismatch(f"curve samples must be (T>=2, 2d), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ShapeMismatch("curve samples must be finite")
        object.__setattr__(self, "samples", _frozen(samples))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / (self.n_samples - 1)

    def path_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.samples, axis=0), axis=1)))

    def to_landmarks(self, label=None, seq_id: str = "") -> LandmarkSequence:
        t, flat = self.samples.shape
        if flat % 2 != 0:
            raise ShapeMismatch("curve dimension is not 2*d")
        return LandmarkSequence(self.samples.reshape(t, flat // 2, 2), label=label, seq_id=seq_id)


@dataclass(frozen=True)
class Srvf:
    """Unit-norm discrete SRVF: one R^(2d) sample per inter-frame interval."""

    samples: np.ndarray         # (T-1, 2d)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ShapeMismatch(f"srvf samples must be (T-1, 2d), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ShapeMismatch("srvf samples must be finite")
        norm = np.sqrt(np.sum(samples * samples) / samples.shape[0])
        if abs(norm - 1.0) > 1e-9:
            raise ShapeMismatch(f"srvf must have unit discrete L2 norm, got {norm!r}")
        object.__setattr__(self, "samples", _frozen(samples))

    @property
    def n_intervals(self) -> int:
        return self.samples.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.samples.shape[0]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0] + 1


@dataclass(frozen=True)
class TangentChart:
    """Tangent space of S taken at a reference point (normally a Karcher mean)."""

    reference: Srvf

    @property
    def shape(self) -> tuple:
        return self.reference.samples.shape


@dataclass(frozen=True)
class TangentVector:
    """Vector tangent to S at the chart reference."""

    samples: np.ndarray         # (T-1, 2d)
    chart: TangentChart = field(repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != self.chart.shape:
            raise ShapeMismatch(
                f"tangent vector shape {samples.shape} != chart shape {self.chart.shape}")
        vnorm = np.sqrt(sphere_inner(samples, samples))
        proj = abs(sphere_inner(samples, self.chart.reference.samples))
        if proj > 1e-8 * max(vnorm, 1e-300):
            raise ShapeMismatch("tangent vector is not orthogonal to the chart reference")
        object.__setattr__(self, "samples", _frozen(samples))

    def norm(self) -> float:
        return float(np.sqrt(sphere_inner(self.samples, self.samples)))


def sphere_inner(q1, q2) -> float:
    """dt-weighted L2 inner product of two SRVF-shaped arrays."""
    a = q1.samples if isinstance(q1, Srvf) else np.asarray(q1, dtype=np.float64)
    b = q2.samples if isinstance(q2, Srvf) else np.asarray(q2, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b) / a.shape[0])


def srvf_encode(curve: Curve) -> Srvf:
    """Encode a curve as its unit-norm square-root velocity function.

    Per interval k: q_k = dbeta_k / sqrt(||dbeta_k|| * dt), with forward
    differences dbeta_k = beta_{k+1} - beta_k, then a global rescale to unit
    discrete L2 norm.  Intervals with vanishing displacement map to zero.
    """
    diffs = np.diff(curve.samples, axis=0)
    speeds = np.linalg.norm(diffs, axis=1)
    if np.all(speeds < EPS_VEL):
        raise DegenerateCurve("constant curve has no SRVF direction")
    dt = curve.dt
    q = np.zeros_like(diffs)
    moving = speeds >= EPS_VEL
    q[moving] = diffs[moving] / np.sqrt(speeds[moving] * dt)[:, None]
    norm = np.sqrt(np.sum(q * q) / q.shape[0])
    return Srvf(q / norm)


def srvf_decode(q: Srvf, initial, intensity: float = 1.0,
                path_length: float | None = None) -> Curve:
    """Recover a curve from an SRVF by cumulative summation of ||q|| q.

    The first sample equals ``initial`` exactly.  ``intensity`` scales every
    displacement linearly.  Since encoding removes scale, an optional
    ``path_length`` rescales displacements so the decoded curve has that
    total length (applied before ``intensity``).
    """
    initial = np.asarray(initial, dtype=np.float64).reshape(-1)
    if initial.shape[0] != q.samples.shape[1]:
        raise ShapeMismatch(
            f"initial frame has dimension {initial.shape[0]}, srvf has {q.samples.shape[1]}")
    if not np.all(np.isfinite(initial)):
        raise ShapeMismatch("initial frame must be finite")
    if intensity < 0:
        raise ShapeMismatch("intensity must be non-negative")
    speeds = np.linalg.norm(q.samples, axis=1)
    steps = q.samples * speeds[:, None] * q.dt
    if path_length is not None:
        natural = float(np.sum(np.linalg.norm(steps, axis=1)))
        if natural > 0:
            steps = steps * (path_length / natural)
    steps = steps * intensity
    out = np.empty((q.n_frames, initial.shape[0]))
    out[0] = initial
    np.cumsum(steps, axis=0, out=out[1:])
    out[1:] += initial
    return Curve(out)


def geodesic_distance(q1: Srvf, q2: Srvf) -> float:
    """Great-circle distance on S, in [0, pi]."""
    return float(np.arccos(np.clip(sphere_inner(q1, q2), -1.0, 1.0)))


def log_map(chart: TangentChart, q: Srvf) -> TangentVector:
    """Project a sphere point into the chart's tangent space.

    v = (theta / sin theta) * (q - cos(theta) * y) with theta the geodesic
    distance to the reference; first-order limit below EPS_SMALL.
    """
    y = chart.reference.samples
    theta = geodesic_distance(q, chart.reference)
    if theta >= np.pi - EPS_ANTIPODAL:
        raise AntipodalPoint(f"log map undefined near the antipode (theta={theta})")
    if theta < EPS_SMALL:
        v = q.samples - sphere_inner(q, chart.reference) * y
    else:
        v = (theta / np.sin(theta)) * (q.samples - np.cos(theta) * y)
    v = v - sphere_inner(v, y) * y      # re-project: float drift breaks exact tangency
    return TangentVector(v, chart)


def exp_map(chart: TangentChart, v) -> Srvf:
    """Shoot a tangent vector back onto the sphere along its geodesic.

    sin(n)/n is cancellation-free for any n > 0, so only the exact zero
    vector short-circuits; a coarser cutoff would stall Karcher iterations
    whose steps shrink below it.
    """
    vv = v.samples if isinstance(v, TangentVector) else np.asarray(v, dtype=np.float64)
    y = chart.reference.samples
    if vv.shape != y.shape:
        raise ShapeMismatch(f"tangent shape {vv.shape} != chart shape {y.shape}")
    norm = np.sqrt(sphere_inner(vv, vv))
    if norm == 0.0:
        return chart.reference
    out = np.cos(norm) * y + (np.sin(norm) / norm) * vv
    out_norm = np.sqrt(sphere_inner(out, out))
    return Srvf(out / out_norm)


def geodesic_interpolate(q1: Srvf, q2: Srvf, s: float) -> Srvf:
    """Point at fraction s of the minimal geodesic from q1 to q2."""
    if not 0.0 <= s <= 1.0:
        raise ShapeMismatch(f"interpolation fraction must be in [0,1], got {s}")
    theta = geodesic_distance(q1, q2)
    if theta >= np.pi - EPS_ANTIPODAL:
        raise AntipodalPoint("no unique geodesic between near-antipodal points")
    if theta < EPS_SMALL:
        return q1
    out = (np.sin((1.0 - s) * theta) * q1.samples + np.sin(s * theta) * q2.samples) / np.sin(theta)
    out_norm = np.sqrt(sphere_inner(out, out))
    return Srvf(out / out_norm)
