"""Multimodal fusion network over spectrogram images.

Each modality feeds its 112x112 image through a small convolutional branch
(entry conv, three residual blocks of widths 16/32/64 with stride 2, global
average pooling); branch features are concatenated into a dense head ending
in a sigmoid. Components can be switched off individually to reproduce the
ablation variants, training uses focal loss with SGD and early stopping, and
evaluation follows a leave-one-participant-out plan whose validation pair is
the two remaining participants with the most balanced class counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .dsp import bilinear_resize, to_image
from .errors import (
    InsufficientSamplesError,
    InvalidConfigError,
    InvalidDataError,
    ShapeError,
)
from .fsd import class_weights


@dataclass(frozen=True)
class FusionConfig:
    """Architecture switches for the fusion network and its ablations."""

    modalities: tuple[str, ...] = ("accel", "audio")
    entry_channels: int = 16
    block_channels: tuple[int, ...] = (16, 32, 64)
    block_strides: tuple[int, ...] = (2, 2, 2)
    dense1_units: int = 64
    dense2_units: int = 32
    include_entry_conv: bool = True
    include_blocks: tuple[bool, ...] = (True, True, True)
    include_dense1: bool = True
    include_dense2: bool = True
    conv_preprocessor: bool = True
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.modalities:
            raise InvalidConfigError("at least one modality is required")
        if len(self.block_channels) != len(self.block_strides):
            raise InvalidConfigError("block_channels and block_strides differ in length")
        if len(self.include_blocks) != len(self.block_channels):
            raise InvalidConfigError("include_blocks length mismatch")


@dataclass(frozen=True)
class AugmentationConfig:
    """Per-sample training augmentation: flip, stretch-and-crop, noise."""

    flip_prob: float = 0.5
    stretch: bool = True
    stretch_range: tuple[float, float] = (1.001, 1.05)
    noise_sd: float = 0.05

    def __post_init__(self):
        lo, hi = self.stretch_range
        if not (1.0 <= lo <= hi):
            raise InvalidConfigError(f"stretch range must satisfy 1 <= lo <= hi, got {self.stretch_range}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidConfigError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if self.noise_sd < 0:
            raise InvalidConfigError(f"noise_sd must be non-negative, got {self.noise_sd}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    loss: str = "focal"
    gamma: float = 2.0
    alpha_pos: float | None = None
    alpha_neg: float | None = None
    augment: AugmentationConfig | None = field(default_factory=AugmentationConfig)
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("focal", "bce"):
            raise InvalidConfigError(f"unknown loss {self.loss!r}")
        if self.max_epochs < 1 or self.patience < 1:
            raise InvalidConfigError("max_epochs and patience must be >= 1")


@dataclass
class SpectroSample:
    """One training instance: per-modality image, label, participant id.

    fs_pct and cue_pct carry segment-level percentages used only by the
    interaction meta-learner.
    """

    images: dict[str, np.ndarray]
    label: int
    participant: str
    fs_pct: float = 0.0
    cue_pct: float = 0.0


@dataclass
class TrainHistory:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    stopped_epoch: int
    wall_seconds: float


def augment(image: np.ndarray, cfg: AugmentationConfig, rng) -> np.ndarray:
    """Apply flip / stretch-and-crop / additive noise to one image.

    The temporal axis is axis 1. Stretch resizes time to round(w * s) with
    s drawn from cfg.stretch_range, then crops a random window back to the
    original width. Output shape always equals input shape.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got shape {img.shape}")
    h, w = img.shape
    if cfg.flip_prob > 0 and rng.random() < cfg.flip_prob:
        img = img[:, ::-1]
    if cfg.stretch:
        s = rng.uniform(*cfg.stretch_range)
        new_w = int(round(w * s))
        if new_w > w:
            stretched = bilinear_resize(img, h, new_w)
            start = int(rng.integers(0, new_w - w + 1))
            img = stretched[:, start:start + w]
    if cfg.noise_sd > 0:
        img = img + rng.normal(0.0, cfg.noise_sd, size=img.shape)
    return np.ascontiguousarray(img)


class _ConvBranch(nn.Layer):
    def __init__(self, cfg: FusionConfig, rng, name: str):
        layers: list[nn.Layer] = []
        c_in = 1
        if cfg.include_entry_conv:
            layers += [
                nn.Conv2d(1, cfg.entry_channels, 3, 1, 1, rng, f"{name}.entry"),
                nn.BatchNorm2d(cfg.entry_channels, cfg.bn_eps, cfg.bn_momentum,
                               f"{name}.entry_bn"),
                nn.ReLU(),
            ]
            c_in = cfg.entry_channels
        for i, (ch, stride, keep) in enumerate(
                zip(cfg.block_channels, cfg.block_strides, cfg.include_blocks)):
            if not keep:
                continue
            layers.append(nn.ResidualBlock(c_in, ch, stride, rng,
                                           cfg.bn_eps, cfg.bn_momentum,
                                           f"{name}.block{i}"))
            c_in = ch
        layers.append(nn.GlobalAvgPool2d())
        self.net = nn.Sequential(layers)
        self.out_features = c_in

    def params(self):
        return self.net.params()

    def buffers(self):
        return self.net.buffers()

    def forward(self, x, train: bool = False):
        return self.net.forward(x, train)

    def backward(self, dout):
        return self.net.backward(dout)


class _ScaledBranch(nn.Layer):
    """Parameter-free branch: average-pool to 8x8, flatten, standardise."""

    POOLED = 8

    def __init__(self, name: str):
        self.pool: nn.AvgPool2d | None = None
        self.flatten = nn.Flatten()
        self.scaler = nn.Standardizer(self.POOLED * self.POOLED, name=f"{name}.scaler")
        self.out_features = self.POOLED * self.POOLED

    def buffers(self):
        return self.scaler.buffers()

    def _ensure_pool(self, x):
        h = x.shape[2]
        if h % self.POOLED or x.shape[3] % self.POOLED:
            raise ShapeError(
                f"scaled branch needs sides divisible by {self.POOLED}, got {x.shape}"
            )
        self.pool = nn.AvgPool2d(h // self.POOLED)

    def fit(self, x) -> None:
        self._ensure_pool(x)
        feats = self.flatten.forward(self.pool.forward(x))
        self.scaler.fit(feats)

    def forward(self, x, train: bool = False):
        self._ensure_pool(x)
        return self.scaler.forward(self.flatten.forward(self.pool.forward(x, train), train), train)

    def backward(self, dout):
        return self.pool.backward(self.flatten.backward(self.scaler.backward(dout)))


class FusionModel:
    """Per-modality branches, concatenation, dense head, sigmoid output."""

    def __init__(self, cfg: FusionConfig):
        self.cfg = cfg
        self.branches: dict[str, nn.Layer] = {}
        for i, mod in enumerate(cfg.modalities):
            rng = np.random.default_rng([cfg.seed, i])
            if cfg.conv_preprocessor:
                self.branches[mod] = _ConvBranch(cfg, rng, mod)
            else:
                self.branches[mod] = _ScaledBranch(mod)
        feat = sum(b.out_features for b in self.branches.values())
        head_rng = np.random.default_rng([cfg.seed, len(cfg.modalities)])
        layers: list[nn.Layer] = []
        width = feat
        if cfg.include_dense1:
            layers += [nn.Dense(width, cfg.dense1_units, head_rng, "head.dense1"), nn.ReLU()]
            width = cfg.dense1_units
        if cfg.include_dense2:
            layers += [nn.Dense(width, cfg.dense2_units, head_rng, "head.dense2"), nn.ReLU()]
            width = cfg.dense2_units
        layers += [nn.Dense(width, 1, head_rng, "head.out"), nn.Sigmoid()]
        self.head = nn.Sequential(layers)
        self._feat_sizes = [self.branches[m].out_features for m in cfg.modalities]

    def params(self):
        out = []
        for mod in self.cfg.modalities:
            out.extend(self.branches[mod].params())
        out.extend(self.head.params())
        return out

    def buffers(self):
        out = []
        for mod in self.cfg.modalities:
            out.extend(self.branches[mod].buffers())
        out.extend(self.head.buffers())
        return out

    @property
    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def _as_batch(self, images: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        out = {}
        for mod in self.cfg.modalities:
            if mod not in images:
                raise InvalidDataError(f"missing modality {mod!r}")
            x = np.asarray(images[mod], dtype=np.float64)
            if x.ndim == 3:
                x = x[:, None, :, :]
            if x.ndim != 4 or x.shape[1] != 1:
                raise ShapeError(f"{mod}: expected (n, h, w) images, got {x.shape}")
            out[mod] = x
        return out

    def forward(self, images: dict[str, np.ndarray], train: bool = False) -> np.ndarray:
        batch = self._as_batch(images)
        feats = [self.branches[m].forward(batch[m], train) for m in self.cfg.modalities]
        joined = np.concatenate(feats, axis=1)
        return self.head.forward(joined, train)[:, 0]

    def backward(self, dprob: np.ndarray) -> None:
        djoined = self.head.backward(dprob[:, None])
        offset = 0
        for mod, size in zip(self.cfg.modalities, self._feat_sizes):
            self.branches[mod].backward(djoined[:, offset:offset + size])
            offset += size

    def predict_proba(self, images: dict[str, np.ndarray],
                      batch_size: int = 64) -> np.ndarray:
        batch = self._as_batch(images)
        n = next(iter(batch.values())).shape[0]
        out = np.empty(n)
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            out[lo:hi] = self.forward({m: batch[m][lo:hi] for m in batch}, train=False)
        return out

    def save(self, path: str, epoch: int = 0) -> None:
        """Write a checkpoint; rounds live parameters to float32 so the file
        and the in-memory model make identical predictions afterwards."""
        arrays = []
        for p in self.params():
            p.value = p.value.astype("<f4").astype(np.float64)
            arrays.append((p.name, p.value))
        buffers = []
        for name, buf in self.buffers():
            buf[...] = buf.astype("<f4").astype(np.float64)
            buffers.append((name, buf))
        cfg = asdict(self.cfg)
        nn.save_arrays(path, {"kind": "fusion", "config": cfg, "epoch": epoch,
                              "seed": self.cfg.seed},
                       arrays + buffers)

    @classmethod
    def load(cls, path: str) -> "FusionModel":
        meta, arrays = nn.load_arrays(path)
        if meta.get("kind") != "fusion":
            raise InvalidDataError(f"{path}: not a fusion checkpoint")
        raw = meta["config"]
        cfg = FusionConfig(
            modalities=tuple(raw["modalities"]),
            entry_channels=raw["entry_channels"],
            block_channels=tuple(raw["block_channels"]),
            block_strides=tuple(raw["block_strides"]),
            dense1_units=raw["dense1_units"],
            dense2_units=raw["dense2_units"],
            include_entry_conv=raw["include_entry_conv"],
            include_blocks=tuple(raw["include_blocks"]),
            include_dense1=raw["include_dense1"],
            include_dense2=raw["include_dense2"],
            conv_preprocessor=raw["conv_preprocessor"],
            bn_eps=raw["bn_eps"],
            bn_momentum=raw["bn_momentum"],
            seed=raw["seed"],
        )
        model = cls(cfg)
        for p in model.params():
            if p.name not in arrays:
                raise InvalidDataError(f"{path}: missing array {p.name}")
            if arrays[p.name].shape != p.value.shape:
                raise ShapeError(f"{path}: {p.name} has shape {arrays[p.name].shape}, "
                                 f"expected {p.value.shape}")
            p.value = arrays[p.name]
            p.grad = np.zeros_like(p.value)
        for name, buf in model.buffers():
            if name in arrays:
                buf[...] = arrays[name]
        return model


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _stack(samples: list[SpectroSample], modalities,
           aug: AugmentationConfig | None = None, rng=None):
    images = {}
    for mod in modalities:
        arrs = []
        for s in samples:
            if mod not in s.images:
                raise InvalidDataError(
                    f"sample from {s.participant} lacks modality {mod!r}"
                )
            img = s.images[mod]
            if aug is not None:
                img = augment(img, aug, rng)
            arrs.append(img)
        images[mod] = np.stack(arrs)
    y = np.array([s.label for s in samples], dtype=np.float64)
    return images, y


def _loss_and_grad(p, y, tcfg: TrainConfig, alpha_pos: float, alpha_neg: float):
    if tcfg.loss == "bce":
        return nn.weighted_bce(p, y, alpha_pos, alpha_neg)
    return nn.focal_loss(p, y, tcfg.gamma, alpha_pos, alpha_neg)


def train_fusion(train_samples: list[SpectroSample],
                 val_samples: list[SpectroSample],
                 cfg: FusionConfig,
                 tcfg: TrainConfig):
    """Train a fusion model with SGD and patience-based early stopping.

    Augmentation parameters are redrawn per sample per epoch. Validation loss
    is computed in eval mode without augmentation; the parameters from the
    best validation epoch are restored before returning.

    Returns:
        (model, TrainHistory)
    """
    if not train_samples or not val_samples:
        raise InsufficientSamplesError("need non-empty train and validation sets")
    labels = [s.label for s in train_samples]
    if len(set(labels)) < 2:
        raise InvalidDataError("training data contains a single class")

    t0 = time.perf_counter()
    model = FusionModel(cfg)
    if not cfg.conv_preprocessor:
        raw, _ = _stack(train_samples, cfg.modalities)
        for mod in cfg.modalities:
            model.branches[mod].fit(raw[mod][:, None, :, :])

    if tcfg.alpha_pos is None or tcfg.alpha_neg is None:
        w = class_weights(sum(labels), len(labels) - sum(labels))
        alpha_pos = tcfg.alpha_pos if tcfg.alpha_pos is not None else w.w_fg
        alpha_neg = tcfg.alpha_neg if tcfg.alpha_neg is not None else w.w_bg
    else:
        alpha_pos, alpha_neg = tcfg.alpha_pos, tcfg.alpha_neg

    params = model.params()
    opt = nn.SGD(params, tcfg.lr)
    shuffle_rng = np.random.default_rng([tcfg.seed, 1])
    aug_rng = np.random.default_rng([tcfg.seed, 2])
    val_images, val_y = _stack(val_samples, cfg.modalities)

    history = TrainHistory([], [], best_epoch=-1, stopped_epoch=-1, wall_seconds=0.0)
    best_val = np.inf
    best_state = None
    since_best = 0
    for epoch in range(tcfg.max_epochs):
        order = shuffle_rng.permutation(len(train_samples))
        epoch_losses = []
        for lo in range(0, len(order), tcfg.batch_size):
            batch = [train_samples[i] for i in order[lo:lo + tcfg.batch_size]]
            images, y = _stack(batch, cfg.modalities, tcfg.augment, aug_rng)
            nn.zero_grads(params)
            p = model.forward(images, train=True)
            loss, dp = _loss_and_grad(p, y, tcfg, alpha_pos, alpha_neg)
            model.backward(dp)
            opt.step()
            epoch_losses.append(loss)
        vp = model.predict_proba(val_images)
        val_loss, _ = _loss_and_grad(vp, val_y, tcfg, alpha_pos, alpha_neg)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            history.best_epoch = epoch
            best_state = ([p.value.copy() for p in params],
                          [buf.copy() for _, buf in model.buffers()])
            since_best = 0
        else:
            since_best += 1
            if since_best >= tcfg.patience:
                break
    history.stopped_epoch = len(history.train_loss) - 1
    if best_state is not None:
        for p, v in zip(params, best_state[0]):
            p.value = v
        for (_, buf), v in zip(model.buffers(), best_state[1]):
            buf[...] = v
    history.wall_seconds = time.perf_counter() - t0
    return model, history


# ---------------------------------------------------------------------------
# Leave-one-participant-out evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LopoSplit:
    test: str
    val: tuple[str, str]
    train: tuple[str, ...]


def make_lopo_plan(samples: list[SpectroSample]) -> list[LopoSplit]:
    """One split per participant: that participant tests, the two remaining
    participants with the smallest |positive - negative| count difference
    validate (ties broken by id), everyone else trains."""
    pids = sorted({s.participant for s in samples})
    if len(pids) < 4:
        raise InsufficientSamplesError(
            f"leave-one-participant-out needs >= 4 participants, got {len(pids)}"
        )
    diff = {}
    for pid in pids:
        pos = sum(1 for s in samples if s.participant == pid and s.label == 1)
        neg = sum(1 for s in samples if s.participant == pid and s.label == 0)
        diff[pid] = abs(pos - neg)
    plan = []
    for test in pids:
        rest = [p for p in pids if p != test]
        rest.sort(key=lambda p: (diff[p], p))
        val = tuple(rest[:2])
        train = tuple(sorted(p for p in rest[2:]))
        plan.append(LopoSplit(test=test, val=val, train=train))
    return plan


@dataclass
class LopoFoldResult:
    split: LopoSplit
    probs: np.ndarray
    labels: np.ndarray
    history: TrainHistory


def run_lopocv(samples: list[SpectroSample], cfg: FusionConfig,
               tcfg: TrainConfig, only_tests: list[str] | None = None):
    """Train and evaluate each leave-one-participant-out split.

    only_tests restricts to the given test participants (the plan itself is
    always built from everyone).
    """
    plan = make_lopo_plan(samples)
    results = []
    by_pid: dict[str, list[SpectroSample]] = {}
    for s in samples:
        by_pid.setdefault(s.participant, []).append(s)
    for split in plan:
        if only_tests is not None and split.test not in only_tests:
            continue
        train = [s for p in split.train for s in by_pid[p]]
        val = [s for p in split.val for s in by_pid[p]]
        test = by_pid[split.test]
        model, history = train_fusion(train, val, cfg, tcfg)
        images, y = _stack(test, cfg.modalities)
        probs = model.predict_proba(images)
        results.append(LopoFoldResult(split=split, probs=probs, labels=y,
                                      history=history))
    return results


# ---------------------------------------------------------------------------
# Interaction meta features
# ---------------------------------------------------------------------------


def interaction_features(p_mm1: float, p_mm2: float, fs_pct: float,
                         cue_pct: float) -> np.ndarray:
    """Feature vector for the interaction meta-learner; all inputs in [0, 1]."""
    vec = np.array([p_mm1, p_mm2, fs_pct, cue_pct], dtype=np.float64)
    if np.any(vec < 0.0) or np.any(vec > 1.0):
        raise InvalidDataError(f"meta features must lie in [0, 1], got {vec}")
    return vec


# ---------------------------------------------------------------------------
# Gradient checking and synthetic data
# ---------------------------------------------------------------------------


def tiny_fusion_config(seed: int = 0) -> FusionConfig:
    """A configuration small enough for exhaustive finite differences."""
    return FusionConfig(
        modalities=("m0", "m1"),
        entry_channels=2,
        block_channels=(2, 3, 4),
        block_strides=(2, 2, 2),
        dense1_units=5,
        dense2_units=3,
        seed=seed,
    )


def gradient_check_fusion(loss: str = "focal", hw: int = 8, batch: int = 8,
                          seed: int = 0, h: float = 1e-4) -> float:
    """Finite-difference check of the full fusion network.

    Builds a tiny two-modality model (entry conv, all three residual blocks
    including projection skips, both dense layers, sigmoid) and compares the
    analytic gradient of the chosen loss against central differences for
    every parameter element. Batches below 8 leave the train-mode batch-norm
    statistics poorly conditioned (a close pair collapses the two-point
    variance), which drowns the comparison in curvature noise.

    Returns the maximum relative error.
    """
    cfg = tiny_fusion_config(seed)
    model = FusionModel(cfg)
    if model.parameter_count > 10_000:
        raise InvalidConfigError(
            f"gradient-check model too large: {model.parameter_count} params"
        )
    rng = np.random.default_rng([seed, 99])
    images = {m: rng.uniform(0.0, 1.0, size=(batch, hw, hw)) for m in cfg.modalities}
    y = rng.integers(0, 2, size=batch).astype(np.float64)
    # fresh batch norms at 1x1 spatial send a batch of two to exactly +-1,
    # parking residual-add preactivations on the ReLU kink where central
    # differences disagree with any subgradient; jitter to a generic point
    for p in model.params():
        p.value = p.value + rng.normal(0.0, 0.05, size=p.value.shape)
    tcfg = TrainConfig(loss=loss, augment=None, seed=seed)

    def compute_loss():
        p = model.forward(images, train=True)
        l, _ = _loss_and_grad(p, y, tcfg, 1.3, 0.8)
        return l

    def run_backprop():
        nn.zero_grads(model.params())
        p = model.forward(images, train=True)
        l, dp = _loss_and_grad(p, y, tcfg, 1.3, 0.8)
        model.backward(dp)
        return l

    return nn.finite_difference_check(compute_loss, run_backprop, model.params(), h)


def synthetic_fusion_dataset(participants: int = 6, per_participant: int = 24,
                             modalities: tuple[str, ...] = ("accel", "audio"),
                             hw: int = 112, seed: int = 0) -> list[SpectroSample]:
    """Separable two-class dataset of spectrogram images.

    Positive samples concentrate energy in a low band, negatives in a high
    band, with modality-specific offsets; images pass through the standard
    resize-and-normalise step so they obey the [0, 1] invariant.
    """
    samples = []
    for pi in range(participants):
        pid = f"p{pi:02d}"
        for i in range(per_participant):
            label = i % 2
            rng = np.random.default_rng([seed, pi, i])
            images = {}
            for mi, mod in enumerate(modalities):
                raw = rng.uniform(0.0, 1.0, size=(16, 24)) * 0.25
                row = 2 + mi if label == 1 else 10 + mi
                raw[row:row + 3, :] += 1.0 + 0.2 * rng.random()
                images[mod] = to_image(raw, hw, hw).pixels
            fs = 0.2 + 0.3 * rng.random() if label else 0.05 * rng.random()
            cue = 0.5 + 0.4 * rng.random() if label else 0.2 * rng.random()
            samples.append(SpectroSample(images=images, label=label,
                                         participant=pid, fs_pct=fs, cue_pct=cue))
    return samples
