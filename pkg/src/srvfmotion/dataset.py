"""Landmark-sequence ingestion, temporal resampling, SRVF training sets and
synthetic corpora.

File formats: JSON Lines with one object per sequence
``{"id", "label", "fps"?, "frames": [[[x, y], ...d], ...T]}`` or CSV with
header ``id,label,frame,landmark,x,y``.  Prepared datasets are stored in a
little-endian binary container with magic string ``SRVFDS1``.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .alignment import KarcherConfig, align, karcher_mean
from .errors import (
    DegenerateCurve,
    InvalidSpec,
    MissingClass,
    ParseError,
    SchemaError,
    ShapeMismatch,
    TooShort,
    VersionMismatch,
    CorruptFile,
)
from .geometry import LandmarkSequence, Srvf, TangentChart, srvf_encode

DEFAULT_CLASSES = ("anger", "disgust", "fear", "happy", "sad", "surprise")

MAGIC = b"SRVFDS1"

# Re-alignment inside every class-mean iteration flip-flops between discrete
# warps, so the tangent-mean norm plateaus near 1e-3; the chart mean has no
# alignment and a full step contracts it fast.
CLASS_MEAN_CONFIG = KarcherConfig(step=0.5, tol=1e-3, max_iters=50, align_each_iter=True)
CHART_CONFIG = KarcherConfig(step=1.0, tol=1e-8, max_iters=100, align_each_iter=False)


@dataclass(frozen=True)
class ExpressionLabel:
    """Class index into a fixed tuple of expression names."""

    index: int
    classes: tuple = DEFAULT_CLASSES

    def __post_init__(self):
        if not 0 <= self.index < len(self.classes):
            raise SchemaError(f"label index {self.index} outside 0..{len(self.classes) - 1}")

    @property
    def name(self) -> str:
        return self.classes[self.index]

    def one_hot(self) -> np.ndarray:
        vec = np.zeros(len(self.classes))
        vec[self.index] = 1.0
        return vec


@dataclass(frozen=True)
class PreparedDataset:
    """SRVF training set: per-class aligned samples plus the tangent chart."""

    srvfs: tuple                    # ((Srvf, ExpressionLabel), ...)
    chart: TangentChart
    class_means: tuple              # one Srvf per class, class order
    n_frames: int
    n_landmarks: int
    class_names: tuple
    provenance: str = ""

    @property
    def n_samples(self) -> int:
        return len(self.srvfs)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def samples_matrix(self) -> np.ndarray:
        return np.stack([q.samples for q, _ in self.srvfs])

    def label_indices(self) -> np.ndarray:
        return np.array([lab.index for _, lab in self.srvfs], dtype=np.int64)

    def by_class(self, index: int) -> list:
        return [q for q, lab in self.srvfs if lab.index == index]


def _label_from_name(name: str, classes: tuple) -> ExpressionLabel:
    if name not in classes:
        raise SchemaError(f"unknown label {name!r}; expected one of {classes}")
    return ExpressionLabel(classes.index(name), classes)


def _validate_frames(frames, rec: str, expected_landmarks=None) -> np.ndarray:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ParseError(f"record {rec}: frames must be T x d x 2, got {arr.shape}")
    if arr.shape[0] < 2:
        raise ParseError(f"record {rec}: needs at least 2 frames")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"record {rec}: non-finite coordinate")
    if expected_landmarks is not None and arr.shape[1] != expected_landmarks:
        raise SchemaError(
            f"record {rec}: has {arr.shape[1]} landmarks, schema requires {expected_landmarks}")
    return arr


def _read_jsonl(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict) or "frames" not in obj:
                raise ParseError(f"{path}:{lineno}: expected an object with a 'frames' key")
            records.append((obj.get("id", f"line{lineno}"), obj.get("label"), obj["frames"]))
    return records


def _read_csv(path) -> list:
    table = {}
    order = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "label", "frame", "landmark", "x", "y"}
        if reader.fieldnames is None:
            return []
        if not required.issubset(set(reader.fieldnames)):
            raise SchemaError(f"{path}: CSV header must contain {sorted(required)}")
        for rowno, row in enumerate(reader, start=2):
            try:
                rec = row["id"]
                frame = int(row["frame"])
                lm = int(row["landmark"])
                x = float(row["x"])
                y = float(row["y"])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{rowno}: bad row ({exc})") from exc
            if rec not in table:
                table[rec] = {"label": row["label"], "points": {}}
                order.append(rec)
            table[rec]["points"][(frame, lm)] = (x, y)
    records = []
    for rec in order:
        pts = table[rec]["points"]
        n_frames = 1 + max(k[0] for k in pts)
        n_lms = 1 + max(k[1] for k in pts)
        frames = np.full((n_frames, n_lms, 2), np.nan)
        for (f, l), (x, y) in pts.items():
            frames[f, l] = (x, y)
        if np.any(np.isnan(frames)):
            raise ParseError(f"{path}: record {rec}: missing frame/landmark rows")
        records.append((rec, table[rec]["label"], frames))
    return records


def load_landmark_sequences(path, fmt: str = "auto", expected_landmarks=None,
                            classes=None) -> list:
    """Read labeled landmark sequences from a JSONL or CSV file.

    Unlabeled records get label None.  When ``classes`` is omitted the class
    universe is the sorted set of label names found in the file.
    """
    path = str(path)
    if fmt == "auto":
        fmt = "csv" if path.lower().endswith(".csv") else "jsonl"
    if fmt not in ("jsonl", "csv"):
        raise SchemaError(f"unknown format {fmt!r}")
    records = _read_jsonl(path) if fmt == "jsonl" else _read_csv(path)

    if classes is None:
        names = sorted({label for _, label, _ in records if label is not None})
        classes = tuple(names) if names else DEFAULT_CLASSES
    else:
        classes = tuple(classes)

    out = []
    for rec, label, frames in records:
        arr = _validate_frames(frames, rec, expected_landmarks)
        lab = None if label is None else _label_from_name(str(label), classes)
        out.append(LandmarkSequence(arr, label=lab, seq_id=str(rec)))
    return out


def save_landmark_sequences(sequences, path) -> None:
    """Write sequences as JSON Lines, one object per sequence."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, seq in enumerate(sequences):
            obj = {
                "id": seq.seq_id or f"seq{i:04d}",
                "label": seq.label.name if seq.label is not None else None,
                "frames": seq.frames.tolist(),
            }
            fh.write(json.dumps(obj) + "\n")


def resample_sequence(seq: LandmarkSequence, n_frames: int) -> LandmarkSequence:
    """Per-landmark linear resampling to a uniform grid of n_frames instants."""
    if n_frames < 2:
        raise TooShort(f"cannot resample to {n_frames} frames")
    if seq.n_frames == n_frames:
        return seq
    t_in = np.linspace(0.0, 1.0, seq.n_frames)
    t_out = np.linspace(0.0, 1.0, n_frames)
    flat = seq.frames.reshape(seq.n_frames, -1)
    out = np.empty((n_frames, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(t_out, t_in, flat[:, j])
    out[0] = flat[0]
    out[-1] = flat[-1]
    return LandmarkSequence(out.reshape(n_frames, seq.n_landmarks, 2),
                            label=seq.label, seq_id=seq.seq_id)


def prepare(sequences, n_frames: int = 32, class_names=None,
            provenance: str = "") -> PreparedDataset:
    """Resample, encode, average per class, align to class means, build chart.

    Deterministic given the input order.  Every sequence must carry a label.
    """
    sequences = list(sequences)
    if not sequences:
        raise MissingClass("no sequences to prepare")
    if any(seq.label is None for seq in sequences):
        raise SchemaError("prepare needs a label on every sequence")

    if class_names is None:
        class_names = tuple(sorted({seq.label.name for seq in sequences}))
    else:
        class_names = tuple(class_names)
    present = {seq.label.name for seq in sequences}
    missing = [name for name in class_names if name not in present]
    if missing:
        raise MissingClass(f"no sequences for classes: {', '.join(missing)}")
    extra = present - set(class_names)
    if extra:
        raise SchemaError(f"sequences carry labels outside the class set: {sorted(extra)}")

    labels = [_label_from_name(seq.label.name, class_names) for seq in sequences]
    srvfs = []
    for seq in sequences:
        try:
            srvfs.append(srvf_encode(resample_sequence(seq, n_frames).to_curve()))
        except DegenerateCurve as exc:
            raise DegenerateCurve(f"sequence {seq.seq_id or '<unnamed>'}: {exc}") from exc

    d = sequences[0].n_landmarks
    if any(seq.n_landmarks != d for seq in sequences):
        raise ShapeMismatch("sequences disagree on the number of landmarks")

    class_means = []
    for c in range(len(class_names)):
        members = [q for q, lab in zip(srvfs, labels) if lab.index == c]
        class_means.append(karcher_mean(members, CLASS_MEAN_CONFIG))

    aligned = [align(class_means[lab.index], q)[1] for q, lab in zip(srvfs, labels)]
    chart = TangentChart(karcher_mean(aligned, CHART_CONFIG))
    return PreparedDataset(
        srvfs=tuple(zip(aligned, labels)),
        chart=chart,
        class_means=tuple(class_means),
        n_frames=n_frames,
        n_landmarks=d,
        class_names=class_names,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# synthetic corpora

# time profiles p(t) with p(0) = 0; one per class, cycled
_PROFILES = (
    ("pulse", lambda t: np.sin(math.pi * t)),
    ("ramp", lambda t: t),
    ("swing", lambda t: np.sin(2.0 * math.pi * t)),
    ("accel", lambda t: t * t),
    ("hold", lambda t: np.minimum(2.0 * t, 1.0)),
    ("wobble", lambda t: t + 0.3 * np.sin(2.0 * math.pi * t)),
)


@dataclass(frozen=True)
class CorpusSpec:
    """Parametric description of a synthetic labeled motion corpus."""

    n_classes: int = 2
    per_class: int = 64
    n_frames: int = 16
    n_landmarks: int = 2
    noise: float = 0.0
    amplitude: float = 1.0
    class_names: tuple = None

    def __post_init__(self):
        if self.n_classes < 1 or self.n_classes > len(_PROFILES):
            raise InvalidSpec(f"n_classes must be 1..{len(_PROFILES)}")
        if self.per_class < 1:
            raise InvalidSpec("per_class must be >= 1")
        if self.n_frames < 2:
            raise InvalidSpec("n_frames must be >= 2")
        if self.n_landmarks < 1:
            raise InvalidSpec("n_landmarks must be >= 1")
        if self.noise < 0:
            raise InvalidSpec("noise must be >= 0")
        if self.amplitude <= 0:
            raise InvalidSpec("amplitude must be > 0")
        if self.class_names is None:
            object.__setattr__(self, "class_names", DEFAULT_CLASSES[: self.n_classes])
        else:
            object.__setattr__(self, "class_names", tuple(self.class_names))
            if len(self.class_names) != self.n_classes:
                raise InvalidSpec("class_names length must equal n_classes")


def synth_corpus(spec: CorpusSpec = CorpusSpec(), seed: int = 0) -> list:
    """Reproducible labeled corpus of parametric landmark motions.

    Class c moves every landmark along a fixed random direction field with
    the class's time profile; each sequence jitters the amplitude and applies
    a smooth random time warp, plus optional Gaussian coordinate noise.  With
    noise 0 every sequence is exactly a warped, scaled class prototype.
    """
    rng = np.random.default_rng(seed)
    base = np.stack([np.cos(2.0 * math.pi * np.arange(spec.n_landmarks) / max(spec.n_landmarks, 3)),
                     np.sin(2.0 * math.pi * np.arange(spec.n_landmarks) / max(spec.n_landmarks, 3))],
                    axis=1)
    directions = []
    for _ in range(spec.n_classes):
        u = rng.standard_normal((spec.n_landmarks, 2))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        scale = rng.uniform(0.5, 1.0, (spec.n_landmarks, 1))
        directions.append(u * scale)

    times = np.linspace(0.0, 1.0, spec.n_frames)
    out = []
    for c in range(spec.n_classes):
        profile = _PROFILES[c % len(_PROFILES)][1]
        label = ExpressionLabel(c, spec.class_names)
        for j in range(spec.per_class):
            amp = spec.amplitude * rng.uniform(0.7, 1.3)
            warp = rng.uniform(-0.2, 0.2)
            warped_times = times + warp * np.sin(math.pi * times)
            frames = base[None, :, :] + amp * profile(warped_times)[:, None, None] * directions[c]
            if spec.noise > 0:
                frames = frames + spec.noise * rng.standard_normal(frames.shape)
            out.append(LandmarkSequence(frames, label=label, seq_id=f"{label.name}-{j:04d}"))
    return out


# ---------------------------------------------------------------------------
# binary container

def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(arr.astype("<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptFile("unexpected end of file")
    return buf


def _read_array(fh, shape) -> np.ndarray:
    n = int(np.prod(shape))
    return np.frombuffer(_read_exact(fh, 8 * n), dtype="<f8").reshape(shape).copy()


def save_prepared(ds: PreparedDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQII", ds.n_classes, ds.n_samples, ds.n_frames, ds.n_landmarks))
        for name in ds.class_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        raw = ds.provenance.encode("utf-8")
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        _write_array(fh, ds.chart.reference.samples)
        for mean in ds.class_means:
            _write_array(fh, mean.samples)
        for q, _ in ds.srvfs:
            _write_array(fh, q.samples)
        fh.write(ds.label_indices().astype("<u4").tobytes())


def load_prepared(path) -> PreparedDataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            if magic[:6] == MAGIC[:6]:
                raise VersionMismatch(f"unsupported container version {magic!r}")
            raise CorruptFile(f"{path} is not a prepared-dataset container")
        c, n, t, d = struct.unpack("<IQII", _read_exact(fh, 20))
        names = []
        for _ in range(c):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4))
            names.append(_read_exact(fh, ln).decode("utf-8"))
        (ln,) = struct.unpack("<Q", _read_exact(fh, 8))
        provenance = _read_exact(fh, ln).decode("utf-8")
        shape = (t - 1, 2 * d)
        chart = TangentChart(Srvf(_read_array(fh, shape)))
        means = tuple(Srvf(_read_array(fh, shape)) for _ in range(c))
        samples = [Srvf(_read_array(fh, shape)) for _ in range(n)]
        idx = np.frombuffer(_read_exact(fh, 4 * n), dtype="<u4")
        if fh.read(1):
            raise CorruptFile("trailing bytes after payload")
    class_names = tuple(names)
    labels = [ExpressionLabel(int(i), class_names) for i in idx]
    return PreparedDataset(
        srvfs=tuple(zip(samples, labels)),
        chart=chart,
        class_means=means,
        n_frames=t,
        n_landmarks=d,
        class_names=class_names,
        provenance=provenance,
    )
