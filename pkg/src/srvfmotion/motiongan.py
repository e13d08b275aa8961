"""Conditional Wasserstein GAN with gradient penalty, trained in the tangent
space of the SRVF hypersphere at the Karcher mean of the data.

The generator maps (noise, one-hot label) to a tangent vector; exp/log maps
wrap it onto the sphere and back so the critic always sees points of the
chart's tangent space.  The critic scores (tangent vector, label) pairs and is
penalized toward unit input-gradient norm along real/fake interpolates.  The
generator objective adds two reconstruction terms against paired real
samples: geodesic distance on the sphere and an L1 distance in the tangent
space.  Dense stacks with label re-concatenation at every hidden layer stand
in for convolutional ones.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import diffcore as dc
from .dataset import ExpressionLabel, PreparedDataset
from .diffcore import AdamState, Tensor, adam_step, grad, no_grad
from .errors import (
    ConfigError,
    CorruptFile,
    DimensionMismatch,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .geometry import Srvf, TangentChart, exp_map, log_map

CHECKPOINT_MAGIC = b"MGAN1"

# keep generated tangent norms clear of the exp/log wrap at pi
NORM_CAP_MARGIN = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch: int = 128
    n_disc: int = 5
    gp_lambda: float = 10.0
    alpha1: float = 0.8
    alpha2: float = 1.0
    alpha3: float = 1.0
    n_iteration: int = 1000
    z_dim: int = 128
    seed: int = 0
    output_scale: float = 0.95 * math.pi
    gen_widths: tuple = (256, 512, 512)
    critic_widths: tuple = (512, 256, 128)
    algorithm1_strict: bool = False
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999

    def __post_init__(self):
        positive = ("lr", "batch", "n_disc", "gp_lambda", "alpha1", "alpha2",
                    "alpha3", "z_dim", "output_scale")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_iteration < 0:
            raise ConfigError("n_iteration must be >= 0")
        if self.n_disc < 1:
            raise ConfigError("n_disc must be >= 1")
        if not self.gen_widths or not self.critic_widths:
            raise ConfigError("network widths must be non-empty")
        object.__setattr__(self, "gen_widths", tuple(int(w) for w in self.gen_widths))
        object.__setattr__(self, "critic_widths", tuple(int(w) for w in self.critic_widths))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()})


@dataclass
class DenseStack:
    """MLP with the conditioning label re-concatenated at every hidden layer."""

    weights: list
    biases: list
    hidden_activation: str          # "relu" | "leaky_relu"
    out_scale: float = 0.0          # > 0 applies tanh scaled by this value

    def params(self) -> list:
        return list(self.weights) + list(self.biases)

    def forward(self, x: Tensor, labels: Tensor) -> Tensor:
        act = dc.relu if self.hidden_activation == "relu" else dc.leaky_relu
        h = dc.concat([x, labels], axis=1)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = act(h @ w + b)
            h = dc.concat([h, labels], axis=1)
        out = h @ self.weights[-1] + self.biases[-1]
        if self.out_scale > 0:
            out = dc.tanh(out) * self.out_scale
        return out


def _init_stack(rng, in_dim: int, widths, out_dim: int, n_classes: int,
                activation: str, out_scale: float = 0.0) -> DenseStack:
    weights, biases = [], []
    prev = in_dim + n_classes
    for w in widths:
        weights.append(Tensor(rng.standard_normal((prev, w)) * math.sqrt(2.0 / prev),
                              requires_grad=True))
        biases.append(Tensor(np.zeros(w), requires_grad=True))
        prev = w + n_classes
    # a tanh-scaled head starts small so initial points stay near the chart
    # instead of wrapping against the norm cap
    final_std = (0.1 if out_scale > 0 else 1.0) * math.sqrt(1.0 / prev)
    weights.append(Tensor(rng.standard_normal((prev, out_dim)) * final_std,
                          requires_grad=True))
    biases.append(Tensor(np.zeros(out_dim), requires_grad=True))
    return DenseStack(weights, biases, activation, out_scale)


@dataclass
class MotionGanModel:
    generator: DenseStack
    critic: DenseStack
    config: TrainConfig
    chart: TangentChart
    class_names: tuple

    @property
    def n_frames(self) -> int:
        return self.chart.reference.n_frames

    @property
    def n_landmarks(self) -> int:
        return self.chart.reference.samples.shape[1] // 2

    @property
    def flat_dim(self) -> int:
        return self.chart.reference.samples.size

    def chart_flat(self) -> np.ndarray:
        return self.chart.reference.samples.reshape(1, -1)

    def params(self) -> list:
        return self.generator.params() + self.critic.params()


def build_model(config: TrainConfig, chart: TangentChart, class_names,
                rng=None) -> MotionGanModel:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n_classes = len(class_names)
    flat_dim = chart.reference.samples.size
    gen = _init_stack(rng, config.z_dim, config.gen_widths, flat_dim, n_classes,
                      "relu", out_scale=config.output_scale)
    critic = _init_stack(rng, flat_dim, config.critic_widths, 1, n_classes, "leaky_relu")
    return MotionGanModel(gen, critic, config, chart, tuple(class_names))


# ---------------------------------------------------------------------------
# manifold operations on flattened (M, D) tensors; all inner products carry
# the dt weight so norms match the geometry module

def _t_inner(a, b, dt: float) -> Tensor:
    return dc.tsum(a * b, axis=1, keepdims=True) * dt


def _t_norm(v, dt: float) -> Tensor:
    return dc.sqrt(_t_inner(v, v, dt))


def _blend(mask: np.ndarray, on: Tensor, off: Tensor) -> Tensor:
    m = Tensor(mask.astype(np.float64))
    return on * m + off * (1.0 - m)


def t_exp_map(y: Tensor, v: Tensor, dt: float) -> Tensor:
    """Batched exponential map; rows with vanishing norm fall back to y + v."""
    n = _t_norm(v, dt)
    regular = n.data >= 1e-12
    safe = n + Tensor((~regular).astype(np.float64))
    out = dc.cos(n) * y + (dc.sin(safe) / safe) * v
    return _blend(regular, out, y + v)


def t_log_map(y: Tensor, q: Tensor, dt: float) -> Tensor:
    """Batched logarithm map with the first-order branch near theta = 0."""
    c = dc.clamp(_t_inner(q, y, dt), -1.0, 1.0)
    theta = dc.acos(c)
    regular = theta.data >= 1e-7
    sin_safe = dc.sin(theta) + Tensor((~regular).astype(np.float64))
    v_reg = (theta / sin_safe) * (q - c * y)
    v_first = q - c * y
    return _blend(regular, v_reg, v_first)


def t_geodesic(a: Tensor, b: Tensor, dt: float) -> Tensor:
    return dc.acos(dc.clamp(_t_inner(a, b, dt), -1.0, 1.0))


def t_norm_clamp(v: Tensor, cap: float, dt: float) -> Tensor:
    """Radially rescale rows whose dt-weighted norm exceeds cap."""
    n = _t_norm(v, dt)
    ratio = cap / (n + 1e-30)
    return v * dc.clamp(ratio, 0.0, 1.0)


def _project_tangent(v: Tensor, y: Tensor, dt: float) -> Tensor:
    return v - _t_inner(v, y, dt) * y


def _onehot(indices, n_classes: int) -> np.ndarray:
    out = np.zeros((len(indices), n_classes))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def generator_forward(model: MotionGanModel, z: np.ndarray,
                      labels_onehot: np.ndarray) -> Tensor:
    """Raw generator output projected onto the chart's tangent space."""
    z = np.atleast_2d(z)
    labels_onehot = np.atleast_2d(labels_onehot)
    if z.shape[1] != model.config.z_dim:
        raise ShapeMismatch(f"noise dimension {z.shape[1]} != z_dim {model.config.z_dim}")
    if labels_onehot.shape[1] != len(model.class_names):
        raise ShapeMismatch("label one-hot width does not match the class count")
    dt = 1.0 / (model.n_frames - 1)
    y = Tensor(model.chart_flat())
    raw = model.generator.forward(Tensor(z), Tensor(labels_onehot))
    return _project_tangent(raw, y, dt)


def fake_tangent(model: MotionGanModel, z: np.ndarray,
                 labels_onehot: np.ndarray) -> Tensor:
    """log_y(exp_y(G(z, c))), differentiable end to end.

    The tangent norm is capped just under pi first, keeping the wrap smooth.
    """
    dt = 1.0 / (model.n_frames - 1)
    y = Tensor(model.chart_flat())
    v = generator_forward(model, z, labels_onehot)
    v = t_norm_clamp(v, math.pi - NORM_CAP_MARGIN, dt)
    return t_log_map(y, t_exp_map(y, v, dt), dt)


def interpolate_hat(real_t, fake_t, tau) -> Tensor:
    """Per-sample convex combination, returned as a leaf that requires grad."""
    real = real_t.data if isinstance(real_t, Tensor) else np.asarray(real_t)
    fake = fake_t.data if isinstance(fake_t, Tensor) else np.asarray(fake_t)
    tau = np.asarray(tau, dtype=np.float64).reshape(-1, 1)
    if real.shape != fake.shape:
        raise ShapeMismatch(f"{real.shape} vs {fake.shape}")
    return Tensor((1.0 - tau) * real + tau * fake, requires_grad=True)


def critic_loss(critic: DenseStack, real_t: Tensor, fake_t: Tensor,
                labels_onehot: np.ndarray, tau: np.ndarray,
                gp_lambda: float) -> tuple[Tensor, dict]:
    """Critic objective: E[D(fake)] - E[D(real)] + lambda * gradient penalty.

    This is the quantity the critic minimizes; the Wasserstein estimate
    (real minus fake critic means) is returned in the components.
    """
    labels = Tensor(np.atleast_2d(labels_onehot))
    d_real = critic.forward(real_t, labels)
    d_fake = critic.forward(fake_t, labels)
    adv = d_fake.mean() - d_real.mean()

    q_hat = interpolate_hat(real_t, fake_t, tau)
    d_hat_sum = critic.forward(q_hat, labels).sum()
    g_hat = grad(d_hat_sum, [q_hat], create_graph=True)[0]
    norms = dc.l2_norm(g_hat, axis=1)
    penalty = ((norms - 1.0) * (norms - 1.0)).mean()

    total = adv + gp_lambda * penalty
    parts = {
        "adv": float(adv.data),
        "penalty": float(penalty.data),
        "wasserstein": float(-adv.data),
        "total": float(total.data),
    }
    return total, parts


def generator_loss(model: MotionGanModel, z: np.ndarray, labels_onehot: np.ndarray,
                   paired_real: np.ndarray, alpha2: float, alpha3: float,
                   alpha1: float = 1.0) -> tuple[Tensor, dict]:
    """Generator objective: alpha1 adversarial + alpha2 sphere reconstruction
    + alpha3 tangent L1 reconstruction against paired real samples."""
    dt = 1.0 / (model.n_frames - 1)
    y = Tensor(model.chart_flat())
    labels = Tensor(np.atleast_2d(labels_onehot))
    q_gt = Tensor(np.atleast_2d(paired_real))

    v = generator_forward(model, z, labels_onehot)
    v = t_norm_clamp(v, math.pi - NORM_CAP_MARGIN, dt)
    on_sphere = t_exp_map(y, v, dt)
    fake_t = t_log_map(y, on_sphere, dt)

    adv = -(model.critic.forward(fake_t, labels).mean())
    s_recon = t_geodesic(on_sphere, q_gt, dt).mean()
    log_gt = t_log_map(y, q_gt, dt)
    t_recon = (dc.tsum(dc.absolute(fake_t - log_gt), axis=1) * dt).mean()

    total = alpha1 * adv + alpha2 * s_recon + alpha3 * t_recon
    parts = {
        "adv": float(adv.data),
        "s_recon": float(s_recon.data),
        "t_recon": float(t_recon.data),
        "total": float(total.data),
    }
    return total, parts


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainRecord:
    iteration: int
    critic_loss: float
    wasserstein: float
    grad_penalty: float
    gen_adv: float
    gen_s_recon: float
    gen_t_recon: float
    gen_total: float
    wall_time: float
    pair_indices: tuple


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        import csv

        cols = ("iteration", "critic_loss", "wasserstein", "grad_penalty",
                "gen_adv", "gen_s_recon", "gen_t_recon", "gen_total", "wall_time")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for rec in self.records:
                writer.writerow([getattr(rec, c) for c in cols])


def _check_finite(value: float, what: str, iteration: int):
    if not math.isfinite(value):
        raise NonFiniteLoss(f"{what} became non-finite at iteration {iteration}")


def train(dataset: PreparedDataset, config: TrainConfig) -> tuple[MotionGanModel, TrainLog]:
    """Alternate n_disc critic steps and one generator step per iteration.

    Real critic inputs are the log-mapped dataset SRVFs; each generator
    sample is paired with a uniformly drawn real SRVF of its class for the
    reconstruction terms.  Fully reproducible from config.seed.
    """
    rng = np.random.default_rng(config.seed)
    model = build_model(config, dataset.chart, dataset.class_names, rng)

    n = dataset.n_samples
    n_classes = dataset.n_classes
    m_batch = min(config.batch, n)
    dt = 1.0 / (model.n_frames - 1)

    flats = dataset.samples_matrix().reshape(n, -1)
    logs = np.stack([log_map(dataset.chart, q).samples.reshape(-1)
                     for q, _ in dataset.srvfs])
    label_idx = dataset.label_indices()
    onehots = _onehot(label_idx, n_classes)
    by_class = [np.flatnonzero(label_idx == c) for c in range(n_classes)]
    if any(len(ix) == 0 for ix in by_class):
        raise ConfigError("every class needs at least one sample")

    gen_params = model.generator.params()
    critic_params = model.critic.params()
    gen_state = AdamState.for_params(gen_params, beta1=config.adam_beta1,
                                     beta2=config.adam_beta2)
    critic_state = AdamState.for_params(critic_params, beta1=config.adam_beta1,
                                        beta2=config.adam_beta2)

    log = TrainLog()
    started = time.perf_counter()
    for it in range(config.n_iteration):
        critic_parts = {"total": 0.0, "wasserstein": 0.0, "penalty": 0.0}
        for _ in range(config.n_disc):
            idx = rng.integers(0, n, m_batch)
            z = rng.standard_normal((m_batch, config.z_dim))
            tau = rng.uniform(0.0, 1.0, (m_batch, 1))
            labels_oh = onehots[idx]
            with no_grad():
                fake = fake_tangent(model, z, labels_oh)
            total, critic_parts = critic_loss(
                model.critic, Tensor(logs[idx]), fake, labels_oh, tau, config.gp_lambda)
            _check_finite(critic_parts["total"], "critic loss", it)
            grads = grad(total, critic_params)
            adam_step(critic_params, grads, critic_state, config.lr)

        cls = rng.integers(0, n_classes, m_batch)
        pair_idx = np.array([by_class[c][rng.integers(0, len(by_class[c]))] for c in cls])
        z = rng.standard_normal((m_batch, config.z_dim))
        if config.algorithm1_strict:
            a1, a2, a3 = 1.0, 0.0, 0.0
        else:
            a1, a2, a3 = config.alpha1, config.alpha2, config.alpha3
        total_g, gen_parts = generator_loss(
            model, z, _onehot(cls, n_classes), flats[pair_idx], a2, a3, alpha1=a1)
        _check_finite(gen_parts["total"], "generator loss", it)
        grads = grad(total_g, gen_params)
        adam_step(gen_params, grads, gen_state, config.lr)

        log.records.append(TrainRecord(
            iteration=it,
            critic_loss=critic_parts["total"],
            wasserstein=critic_parts["wasserstein"],
            grad_penalty=critic_parts["penalty"],
            gen_adv=gen_parts["adv"],
            gen_s_recon=gen_parts["s_recon"],
            gen_t_recon=gen_parts["t_recon"],
            gen_total=gen_parts["total"],
            wall_time=time.perf_counter() - started,
            pair_indices=tuple(int(i) for i in pair_idx),
        ))
    return model, log


def generate_motion(model: MotionGanModel, label, seed: int) -> Srvf:
    """Sample one SRVF of the requested class from the trained generator."""
    if isinstance(label, ExpressionLabel):
        index = label.index
    elif isinstance(label, str):
        index = model.class_names.index(label)
    else:
        index = int(label)
    if not 0 <= index < len(model.class_names):
        raise ShapeMismatch(f"class index {index} outside 0..{len(model.class_names) - 1}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((1, model.config.z_dim))
    dt = 1.0 / (model.n_frames - 1)
    with no_grad():
        v = generator_forward(model, z, _onehot([index], len(model.class_names)))
        v = t_norm_clamp(v, math.pi - NORM_CAP_MARGIN, dt)
    return exp_map(model.chart, v.data.reshape(model.chart.reference.samples.shape))


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(model: MotionGanModel, path) -> None:
    arrays = [model.chart.reference.samples] + [p.data for p in model.params()]
    header = {
        "version": 1,
        "z_dim": model.config.z_dim,
        "n_classes": len(model.class_names),
        "n_frames": model.n_frames,
        "n_landmarks": model.n_landmarks,
        "class_names": list(model.class_names),
        "config": model.config.to_dict(),
        "shapes": [list(a.shape) for a in arrays],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = struct.pack("<I", len(head)) + head
    for arr in arrays:
        payload += arr.astype("<f8").tobytes()
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(digest)
        fh.write(payload)


def load_checkpoint(path) -> MotionGanModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            if magic[:4] == CHECKPOINT_MAGIC[:4]:
                raise VersionMismatch(f"unsupported checkpoint version {magic!r}")
            raise CorruptFile(f"{path} is not a MotionGAN checkpoint")
        digest = fh.read(32)
        payload = fh.read()
    if len(digest) != 32 or hashlib.sha256(payload).digest() != digest:
        raise CorruptFile("checkpoint checksum mismatch")
    (head_len,) = struct.unpack("<I", payload[:4])
    header = json.loads(payload[4:4 + head_len].decode("utf-8"))
    if header.get("version") != 1:
        raise VersionMismatch(f"unsupported checkpoint version {header.get('version')}")
    config = TrainConfig.from_dict(header["config"])

    t, d = header["n_frames"], header["n_landmarks"]
    shapes = [tuple(s) for s in header["shapes"]]
    if shapes[0] != (t - 1, 2 * d):
        raise DimensionMismatch(
            f"chart shape {shapes[0]} does not match (T-1, 2d) = {(t - 1, 2 * d)}")
    offset = 4 + head_len
    arrays = []
    for shape in shapes:
        size = 8 * int(np.prod(shape))
        chunk = payload[offset:offset + size]
        if len(chunk) != size:
            raise CorruptFile("checkpoint payload truncated")
        arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).copy())
        offset += size
    if offset != len(payload):
        raise CorruptFile("trailing bytes in checkpoint")

    chart = TangentChart(Srvf(arrays[0]))
    model = build_model(config, chart, tuple(header["class_names"]))
    params = model.params()
    if len(params) != len(arrays) - 1:
        raise CorruptFile("parameter count mismatch")
    for p, arr in zip(params, arrays[1:]):
        if p.data.shape != arr.shape:
            raise DimensionMismatch(
                f"parameter shape {arr.shape} does not match architecture {p.data.shape}")
        p.data = arr
    return model
