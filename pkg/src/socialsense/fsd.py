"""Foreground speech detection from paired audio-frame embeddings.

Each 1-second cue slot yields two embedding frames. A small MLP scores every
frame (weak supervision copies the slot label to both frames, class-weighted
cross-entropy corrects the foreground/background imbalance), then a
meta-learner over the two frame probabilities makes the slot-level call.
Evaluation uses stratified 10-fold cross-validation where the held-out fold
is split into validation and test halves and the two halves swap roles, so
every instance is tested exactly once across the 20 runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import nn
from .errors import (
    DegenerateDataError,
    InvalidConfigError,
    InvalidDataError,
    ShapeError,
    UndefinedFractionError,
)


@dataclass(frozen=True)
class ClassWeights:
    """Inverse-frequency class weights: w_c = N / (2 * n_c).

    Weights are kept as exact rationals; the float views feed the loss.
    """

    n_fg: int
    n_bg: int
    w_fg_exact: Fraction
    w_bg_exact: Fraction

    @property
    def w_fg(self) -> float:
        return float(self.w_fg_exact)

    @property
    def w_bg(self) -> float:
        return float(self.w_bg_exact)


def class_weights(n_fg: int, n_bg: int) -> ClassWeights:
    n_fg, n_bg = int(n_fg), int(n_bg)
    if n_fg <= 0 or n_bg <= 0:
        raise DegenerateDataError(
            f"both classes need instances, got fg={n_fg} bg={n_bg}"
        )
    total = n_fg + n_bg
    return ClassWeights(
        n_fg=n_fg,
        n_bg=n_bg,
        w_fg_exact=Fraction(total, 2 * n_fg),
        w_bg_exact=Fraction(total, 2 * n_bg),
    )


def fs_fraction(n_fg_slots: int, n_recorded_slots: int) -> float:
    """Fraction of recorded slots classified as foreground speech.

    The denominator counts every recorded slot, not just cue slots.
    """
    if n_recorded_slots <= 0:
        raise UndefinedFractionError("no recorded slots")
    if not 0 <= n_fg_slots <= n_recorded_slots:
        raise InvalidDataError(
            f"{n_fg_slots} foreground slots out of {n_recorded_slots} recorded"
        )
    return n_fg_slots / n_recorded_slots


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeechInstance:
    """One labelled 1-s slot: two embedding frames and a fg/bg label."""

    id: str
    label: int
    emb1: np.ndarray
    emb2: np.ndarray


def write_instances(path: str, instances: list[SpeechInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "id": inst.id,
                "label": "fg" if inst.label == 1 else "bg",
                "embedding_frame1": [float(v) for v in inst.emb1],
                "embedding_frame2": [float(v) for v in inst.emb2],
            }) + "\n")


def read_instances(path: str) -> list[SpeechInstance]:
    out = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                label = {"fg": 1, "bg": 0}[obj["label"]]
                e1 = np.asarray(obj["embedding_frame1"], dtype=np.float64)
                e2 = np.asarray(obj["embedding_frame2"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidDataError(f"{path}:{lineno}: bad instance: {exc}") from exc
            if e1.shape != e2.shape or e1.ndim != 1:
                raise ShapeError(f"{path}:{lineno}: frame embeddings disagree")
            if dim is None:
                dim = e1.shape[0]
            elif e1.shape[0] != dim:
                raise ShapeError(f"{path}:{lineno}: embedding dim changed")
            out.append(SpeechInstance(id=str(obj["id"]), label=label, emb1=e1, emb2=e2))
    return out


def frames_from_instances(instances: list[SpeechInstance]):
    """Weak supervision: both frames of an instance inherit its label."""
    if not instances:
        raise DegenerateDataError("no instances")
    X = np.concatenate([
        np.stack([i.emb1 for i in instances]),
        np.stack([i.emb2 for i in instances]),
    ])
    y = np.concatenate([
        np.array([i.label for i in instances], dtype=np.float64),
        np.array([i.label for i in instances], dtype=np.float64),
    ])
    return X, y


# ---------------------------------------------------------------------------
# Frame classifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameTrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 25
    patience: int = 3
    seed: int = 0


class FrameClassifier:
    """MLP E -> 256 -> 64 -> 1 with sigmoid output."""

    HIDDEN = (256, 64)

    def __init__(self, dim: int, seed: int = 0):
        rng = np.random.default_rng([seed, 17])
        h1, h2 = self.HIDDEN
        self.dim = dim
        self.seed = seed
        self.net = nn.Sequential([
            nn.Dense(dim, h1, rng, "frame.dense1"),
            nn.ReLU(),
            nn.Dense(h1, h2, rng, "frame.dense2"),
            nn.ReLU(),
            nn.Dense(h2, 1, rng, "frame.out"),
            nn.Sigmoid(),
        ])

    def params(self):
        return self.net.params()

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ShapeError(f"expected (n, {self.dim}) embeddings, got {X.shape}")
        return self.net.forward(X)[:, 0]

    def save(self, path: str, epoch: int = 0) -> None:
        arrays = []
        for p in self.params():
            p.value = p.value.astype("<f4").astype(np.float64)
            arrays.append((p.name, p.value))
        nn.save_arrays(path, {"kind": "frame-classifier", "dim": self.dim,
                              "seed": self.seed, "epoch": epoch}, arrays)

    @classmethod
    def load(cls, path: str) -> "FrameClassifier":
        meta, arrays = nn.load_arrays(path)
        if meta.get("kind") != "frame-classifier":
            raise InvalidDataError(f"{path}: not a frame-classifier checkpoint")
        clf = cls(dim=int(meta["dim"]), seed=int(meta["seed"]))
        for p in clf.params():
            if p.name not in arrays:
                raise InvalidDataError(f"{path}: missing array {p.name}")
            p.value = arrays[p.name]
            p.grad = np.zeros_like(p.value)
        return clf


def train_frame_classifier(X, y, X_val, y_val, weights: ClassWeights,
                           cfg: FrameTrainConfig | None = None):
    """Adam on class-weighted BCE with patience-based early stopping.

    Returns (classifier, history) where history holds per-epoch train and
    validation losses; parameters from the best validation epoch win.
    """
    cfg = cfg or FrameTrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if len(set(y.tolist())) < 2:
        raise DegenerateDataError("training frames contain a single class")
    clf = FrameClassifier(dim=X.shape[1], seed=cfg.seed)
    params = clf.params()
    opt = nn.Adam(params, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 23])
    w_fg, w_bg = weights.w_fg, weights.w_bg

    history = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    best_val = np.inf
    best_state = None
    since_best = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(X.shape[0])
        losses = []
        for lo in range(0, X.shape[0], cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            nn.zero_grads(params)
            p = clf.net.forward(X[idx], train=True)[:, 0]
            loss, dp = nn.weighted_bce(p, y[idx], w_fg, w_bg)
            clf.net.backward(dp[:, None])
            opt.step()
            losses.append(loss)
        vp = clf.predict_proba(X_val)
        val_loss, _ = nn.weighted_bce(vp, y_val, w_fg, w_bg)
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            history["best_epoch"] = epoch
            best_state = [p.value.copy() for p in params]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    if best_state is not None:
        for p, v in zip(params, best_state):
            p.value = v
    return clf, history


# ---------------------------------------------------------------------------
# Meta-learners over frame probability pairs
# ---------------------------------------------------------------------------

META_ALGORITHMS = ("nearest-centroid", "logistic", "linear-margin")


class NearestCentroidMeta:
    """Assign the class of the nearer centroid; exact ties go to background."""

    algorithm = "nearest-centroid"

    def __init__(self):
        self.centroid_fg = None
        self.centroid_bg = None

    def fit(self, F, y):
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y)
        if not (np.any(y == 1) and np.any(y == 0)):
            raise DegenerateDataError("meta training needs both classes")
        self.centroid_fg = F[y == 1].mean(axis=0)
        self.centroid_bg = F[y == 0].mean(axis=0)
        return self

    def predict(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        d_fg = np.sum((F - self.centroid_fg) ** 2, axis=1)
        d_bg = np.sum((F - self.centroid_bg) ** 2, axis=1)
        return (d_fg < d_bg).astype(int)

    def arrays(self):
        return [("centroid_fg", self.centroid_fg), ("centroid_bg", self.centroid_bg)]

    def restore(self, arrays):
        self.centroid_fg = arrays["centroid_fg"]
        self.centroid_bg = arrays["centroid_bg"]


class LogisticMeta:
    """Full-batch gradient descent on the logistic loss, zero-initialised."""

    algorithm = "logistic"

    def __init__(self, lr: float = 0.5, iters: int = 800):
        self.lr = lr
        self.iters = iters
        self.w = None
        self.b = 0.0

    def fit(self, F, y):
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not (np.any(y == 1) and np.any(y == 0)):
            raise DegenerateDataError("meta training needs both classes")
        n, d = F.shape
        w = np.zeros(d)
        b = 0.0
        for _ in range(self.iters):
            z = F @ w + b
            p = 1.0 / (1.0 + np.exp(-z))
            g = p - y
            w -= self.lr * (F.T @ g) / n
            b -= self.lr * g.mean()
        self.w, self.b = w, b
        return self

    def predict(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        return (F @ self.w + self.b > 0.0).astype(int)

    def arrays(self):
        return [("w", self.w), ("b", np.array([self.b]))]

    def restore(self, arrays):
        self.w = arrays["w"]
        self.b = float(arrays["b"][0])


class LinearMarginMeta:
    """L2-regularised hinge loss via deterministic subgradient descent."""

    algorithm = "linear-margin"

    def __init__(self, lr: float = 0.5, iters: int = 800, l2: float = 1e-3):
        self.lr = lr
        self.iters = iters
        self.l2 = l2
        self.w = None
        self.b = 0.0

    def fit(self, F, y):
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not (np.any(y == 1) and np.any(y == 0)):
            raise DegenerateDataError("meta training needs both classes")
        ypm = np.where(y == 1.0, 1.0, -1.0)
        n, d = F.shape
        w = np.zeros(d)
        b = 0.0
        for t in range(1, self.iters + 1):
            margin = ypm * (F @ w + b)
            active = margin < 1.0
            gw = self.l2 * w - (ypm[active, None] * F[active]).sum(axis=0) / n
            gb = -ypm[active].sum() / n
            step = self.lr / np.sqrt(t)
            w -= step * gw
            b -= step * gb
        self.w, self.b = w, b
        return self

    def predict(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        return (F @ self.w + self.b > 0.0).astype(int)

    def arrays(self):
        return [("w", self.w), ("b", np.array([self.b]))]

    def restore(self, arrays):
        self.w = arrays["w"]
        self.b = float(arrays["b"][0])


def train_meta(F, y, algorithm: str = "nearest-centroid"):
    if algorithm == "nearest-centroid":
        meta = NearestCentroidMeta()
    elif algorithm == "logistic":
        meta = LogisticMeta()
    elif algorithm == "linear-margin":
        meta = LinearMarginMeta()
    else:
        raise InvalidConfigError(
            f"unknown meta algorithm {algorithm!r}; pick from {META_ALGORITHMS}"
        )
    return meta.fit(F, y)


def save_meta(path: str, meta) -> None:
    nn.save_arrays(path, {"kind": "meta", "algorithm": meta.algorithm},
                   [(n, np.asarray(a, dtype=np.float64)) for n, a in meta.arrays()])


def load_meta(path: str):
    header, arrays = nn.load_arrays(path)
    if header.get("kind") != "meta":
        raise InvalidDataError(f"{path}: not a meta-learner checkpoint")
    algo = header["algorithm"]
    meta = {
        "nearest-centroid": NearestCentroidMeta,
        "logistic": LogisticMeta,
        "linear-margin": LinearMarginMeta,
    }.get(algo)
    if meta is None:
        raise InvalidDataError(f"{path}: unknown algorithm {algo!r}")
    obj = meta()
    obj.restore(arrays)
    return obj


def frame_and_rule(p1, p2, threshold: float = 0.5) -> np.ndarray:
    """Baseline slot rule: foreground only when both frames clear 0.5."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    return ((p1 > threshold) & (p2 > threshold)).astype(int)


# ---------------------------------------------------------------------------
# Stratified swap-fold protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSplit:
    fold: int
    swapped: bool
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


@dataclass
class FoldPlan:
    n: int
    folds: list[np.ndarray]
    runs: list[RunSplit]


def make_fold_plan(labels, n_folds: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified folds plus the swapped validation/test runs.

    Instances of each class are shuffled once and dealt round-robin, keeping
    per-fold class counts within one of each other. Each fold is halved
    per class into validation and test subsets; the two runs per fold swap
    those halves, so the 2 * n_folds runs test every instance exactly once
    and never share instances between a run's validation and test sets.
    """
    y = np.asarray(labels).astype(int)
    if n_folds < 2:
        raise InvalidConfigError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng([seed, 41])
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < 2 * n_folds:
            raise DegenerateDataError(
                f"class {cls} has {idx.size} instances, needs >= {2 * n_folds}"
            )
        idx = rng.permutation(idx)
        for k in range(n_folds):
            folds[k].extend(idx[k::n_folds].tolist())
    fold_arrays = [np.array(sorted(f)) for f in folds]

    runs = []
    all_idx = np.arange(y.size)
    for f, fold in enumerate(fold_arrays):
        train = np.setdiff1d(all_idx, fold)
        half_a, half_b = [], []
        for cls in (0, 1):
            members = fold[y[fold] == cls]
            # alternate which half takes the odd element so sizes stay level
            cut = (members.size + (1 if cls == 0 else 0)) // 2
            half_a.extend(members[:cut].tolist())
            half_b.extend(members[cut:].tolist())
        a = np.array(sorted(half_a))
        b = np.array(sorted(half_b))
        runs.append(RunSplit(fold=f, swapped=False, train_idx=train, val_idx=a, test_idx=b))
        runs.append(RunSplit(fold=f, swapped=True, train_idx=train, val_idx=b, test_idx=a))
    return FoldPlan(n=y.size, folds=fold_arrays, runs=runs)


@dataclass
class ProtocolResult:
    plan: FoldPlan
    predictions: np.ndarray
    probs1: np.ndarray
    probs2: np.ndarray
    labels: np.ndarray
    wall_seconds: float


def run_protocol(instances: list[SpeechInstance], algorithm: str = "nearest-centroid",
                 n_folds: int = 10, seed: int = 0,
                 train_cfg: FrameTrainConfig | None = None) -> ProtocolResult:
    """Run the full swap-fold protocol and collect test predictions.

    Per run: the frame classifier trains on the nine training folds (weak
    frame labels, class-weighted loss), early-stops on the validation half,
    and the meta-learner fits on training-fold probability pairs; the test
    half contributes each instance's single prediction.
    """
    t0 = time.perf_counter()
    labels = np.array([i.label for i in instances])
    plan = make_fold_plan(labels, n_folds=n_folds, seed=seed)
    predictions = np.full(labels.size, -1, dtype=int)
    probs1 = np.full(labels.size, np.nan)
    probs2 = np.full(labels.size, np.nan)
    base_cfg = train_cfg or FrameTrainConfig()

    for run in plan.runs:
        train = [instances[i] for i in run.train_idx]
        X_train, y_train = frames_from_instances(train)
        val = [instances[i] for i in run.val_idx]
        X_val, y_val = frames_from_instances(val)
        weights = class_weights(int(y_train.sum()), int((1 - y_train).sum()))
        cfg = FrameTrainConfig(lr=base_cfg.lr, batch_size=base_cfg.batch_size,
                               max_epochs=base_cfg.max_epochs,
                               patience=base_cfg.patience,
                               seed=base_cfg.seed + run.fold * 2 + int(run.swapped))
        clf, _ = train_frame_classifier(X_train, y_train, X_val, y_val, weights, cfg)

        def pair_probs(subset):
            e1 = np.stack([i.emb1 for i in subset])
            e2 = np.stack([i.emb2 for i in subset])
            return np.stack([clf.predict_proba(e1), clf.predict_proba(e2)], axis=1)

        meta = train_meta(pair_probs(train), np.array([i.label for i in train]),
                          algorithm)
        F_test = pair_probs([instances[i] for i in run.test_idx])
        pred = meta.predict(F_test)
        predictions[run.test_idx] = pred
        probs1[run.test_idx] = F_test[:, 0]
        probs2[run.test_idx] = F_test[:, 1]

    if np.any(predictions < 0):
        raise RuntimeError("protocol left instances without predictions")
    return ProtocolResult(plan=plan, predictions=predictions, probs1=probs1,
                          probs2=probs2, labels=labels,
                          wall_seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Synthetic instances
# ---------------------------------------------------------------------------


def synthetic_instances(n: int = 1200, dim: int = 16, mixed_fraction: float = 0.15,
                        separation: float = 6.0, seed: int = 0,
                        fg_fraction: float = 0.4) -> list[SpeechInstance]:
    """Separable embedding pairs with a slice of mixed foreground instances.

    Pure instances draw both frames from their class cluster. Mixed instances
    are labelled foreground but have one background-like frame, which is what
    makes the meta-learner outperform the both-frames rule. Class and mixed
    counts are exact: round(n * fg_fraction) foreground instances of which
    round(mixed_fraction * that) are mixed.
    """
    rng = np.random.default_rng([seed, 7])
    half = separation / 2.0
    n_fg = round(n * fg_fraction)
    fg_slots = rng.permutation(n)[:n_fg]
    labels = np.zeros(n, dtype=int)
    labels[fg_slots] = 1
    mixed_ids = set(fg_slots[:round(n_fg * mixed_fraction)].tolist())
    out = []
    for i in range(n):
        label = int(labels[i])
        mixed = i in mixed_ids

        def frame(fg_like):
            e = rng.normal(0.0, 1.0, size=dim)
            e[0] += half if fg_like else -half
            return e

        if mixed:
            pair = [frame(True), frame(False)]
            rng.shuffle(pair)
            e1, e2 = pair
        else:
            e1, e2 = frame(label == 1), frame(label == 1)
        out.append(SpeechInstance(id=f"inst-{i:05d}", label=label, emb1=e1, emb2=e2))
    return out
