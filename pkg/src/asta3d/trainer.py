"""Training, evaluation and inference around a saved network."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import file_digest, load_checkpoint, save_checkpoint
from .data import SyntheticTaskSpec, make_batches, read_sequence
from .metrics import evaluate_metrics
from .networks import CLASSIFICATION, AstaNet, NetworkSpec
from .optim import Adam
from .tensor import cross_entropy_loss, no_grad

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1


@dataclass
class OptimizerConfig:
    lr: float = 1e-3
    decay_factor: float = 0.7
    decay_period: int = 200_000


@dataclass
class Seeds:
    data: int = 0
    init: int = 0
    shuffle: int = 0


@dataclass
class Paths:
    dataset: str = "data"
    checkpoint: str = "model.ckpt"
    report: str = "report.json"


@dataclass
class RunConfig:
    task: str = CLASSIFICATION
    network: dict = field(default_factory=dict)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 16
    epochs: int = 50
    seeds: Seeds = field(default_factory=Seeds)
    paths: Paths = field(default_factory=Paths)
    val_fraction: float = 0.1
    random_fps_seed: bool = False
    data: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    test_count: int = 40

    def __post_init__(self):
        for name, kind in (("optimizer", OptimizerConfig), ("seeds", Seeds), ("paths", Paths),
                           ("data", SyntheticTaskSpec)):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, kind(**value))
        if not self.optimizer.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.optimizer.decay_factor <= 1:
            raise ValueError("decay factor must lie in (0, 1]")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")

    @property
    def spec(self):
        return NetworkSpec.from_dict({"task": self.task, **self.network})

    def to_dict(self):
        return asdict(self)


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    cfg = RunConfig(**raw)
    base = Path(path).parent
    for key in ("dataset", "checkpoint", "report"):
        value = getattr(cfg.paths, key)
        if not Path(value).is_absolute():
            setattr(cfg.paths, key, str(base / value))
    return cfg


# ---- datasets -------------------------------------------------------------

def load_split(directory):
    files = sorted(Path(directory).glob("*.seq"))
    return [read_sequence(f) for f in files]


def load_dataset(root):
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} not found")
    splits = {p.name: load_split(p) for p in sorted(root.iterdir()) if p.is_dir()}
    if not splits.get("train"):
        raise ValueError(f"{root} has no train/ sequences")
    return splits


def split_validation(seqs, fraction, seed):
    n_val = int(round(len(seqs) * fraction))
    if n_val == 0:
        return list(seqs), []
    order = np.random.default_rng(seed).permutation(len(seqs))
    val = set(order[:n_val].tolist())
    return ([s for i, s in enumerate(seqs) if i not in val],
            [s for i, s in enumerate(seqs) if i in val])


def targets(seqs, task):
    if task == CLASSIFICATION:
        return np.array([s.label for s in seqs])
    return np.concatenate([s.labels for s in seqs])


def check_compatible(spec, seqs):
    """Dry-run shape checks before any training."""
    for s in seqs:
        if s.feature_dim != spec.in_channels:
            raise ValueError(f"dataset has {s.feature_dim} feature channels, network expects {spec.in_channels}")
        if len(s) < spec.stages[0].cores:
            raise ValueError(f"sequence of {len(s)} points is smaller than first stage ({spec.stages[0].cores} cores)")
        if s.frame_count > spec.frames:
            raise ValueError(f"sequence has {s.frame_count} frames, radius schedule covers {spec.frames}")
        if s.labels is None:
            raise ValueError("training sequences need labels")
        if s.labels.max() >= spec.class_count:
            raise ValueError(f"label {s.labels.max()} outside {spec.class_count} classes")
    if spec.task == CLASSIFICATION and len({len(s) for s in seqs}) > 1:
        raise ValueError("classification batches need equal point counts per sequence")


# ---- model io ---------------------------------------------------------------

def save_model(model, path, extra=None):
    meta = {"spec": model.spec.to_dict(), **(extra or {})}
    save_checkpoint(path, model.state(), meta)


def load_model(path):
    arrays, meta = load_checkpoint(path)
    model = AstaNet(NetworkSpec.from_dict(meta["spec"]))
    model.load_state(arrays)
    return model.eval(), meta


# ---- loops ------------------------------------------------------------------

def predict_logits(model, seqs, plans=None):
    """Inference-mode logits, one sequence at a time so results ignore batch makeup."""
    model.eval()
    out = []
    with no_grad():
        for i, s in enumerate(seqs):
            p = None if plans is None else [plans[i]]
            out.append(model([s], p).data)
    return out


def evaluate(model, seqs, plans=None):
    logits = predict_logits(model, seqs, plans)
    task = model.spec.task
    preds = np.concatenate([lg.argmax(axis=1) for lg in logits])
    return evaluate_metrics(preds, targets(seqs, task), task, model.spec.class_count)


def _score(metrics):
    return metrics["accuracy"] if "miou" not in metrics else metrics["miou"]


class PlanCache:
    def __init__(self, model):
        self.model = model
        self._plans = {}

    def get(self, seqs, seed_index=None):
        out = []
        for s in seqs:
            if seed_index is not None:
                out.append(self.model.plan(s, seed_index))
                continue
            key = id(s)
            if key not in self._plans:
                self._plans[key] = self.model.plan(s)
            out.append(self._plans[key])
        return out


def fit(config, train_seqs, val_seqs=(), checkpoint_path=None, progress=None):
    """Train a fresh model; returns (model, history).

    With validation data the best-scoring epoch is kept (and saved to
    ``checkpoint_path``); without it, the final epoch is.
    """
    spec = config.spec
    check_compatible(spec, list(train_seqs) + list(val_seqs))
    model = AstaNet(spec, seed=config.seeds.init)
    opt = Adam(model, config.optimizer.lr, config.optimizer.decay_factor, config.optimizer.decay_period)
    cache = PlanCache(model)
    fps_rng = np.random.default_rng(config.seeds.shuffle + 1)
    history = {"loss": [], "val": [], "best_epoch": None}
    best, best_state = -np.inf, None
    for epoch in range(config.epochs):
        model.train()
        total, count = 0.0, 0
        for batch in make_batches(train_seqs, config.batch_size, seed=config.seeds.shuffle * 100_003 + epoch):
            seed_index = int(fps_rng.integers(len(batch[0]))) if config.random_fps_seed else None
            plans = cache.get(batch, seed_index)
            logits = model(batch, plans)
            loss = cross_entropy_loss(logits, targets(batch, spec.task))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(batch)
            count += len(batch)
        history["loss"].append(total / count)
        if val_seqs:
            score = _score(evaluate(model, val_seqs, cache.get(val_seqs)))
            history["val"].append(score)
            if score > best:
                best, history["best_epoch"] = score, epoch
                best_state = {k: v.copy() for k, v in model.state().items()}
        if progress:
            progress(epoch, history)
        log.debug("epoch %d loss %.5f", epoch, history["loss"][-1])
    if best_state is not None:
        model.load_state(best_state)
    else:
        history["best_epoch"] = config.epochs - 1
    model.eval()
    if checkpoint_path:
        save_model(model, checkpoint_path, {"task": spec.task})
    return model, history, cache


def run_training(config, progress=None):
    """Full ``train`` verb: fit, checkpoint, report (+ loss-curve figure)."""
    start = time.perf_counter()
    splits = load_dataset(config.paths.dataset)
    train_seqs, val_seqs = split_validation(splits["train"], config.val_fraction, config.seeds.data)
    Path(config.paths.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    model, history, cache = fit(config, train_seqs, val_seqs, config.paths.checkpoint, progress)
    final = {"train": evaluate(model, train_seqs, cache.get(train_seqs))}
    if val_seqs:
        final["val"] = evaluate(model, val_seqs, cache.get(val_seqs))
    if splits.get("test"):
        final["test"] = evaluate(model, splits["test"], cache.get(splits["test"]))
    report = {
        "schema_version": REPORT_SCHEMA,
        "kind": "train",
        "task": config.task,
        "config": config.to_dict(),
        "seeds": asdict(config.seeds),
        "loss_curve": history["loss"],
        "val_curve": history["val"],
        "best_epoch": history["best_epoch"],
        "final_metrics": final,
        "parameter_count": model.parameter_count(),
        "checkpoint": {"path": str(config.paths.checkpoint),
                       "sha256": file_digest(config.paths.checkpoint)},
        "wall_clock_seconds": time.perf_counter() - start,
    }
    write_report(report, config.paths.report)
    return report


def run_eval(checkpoint, dataset, split=None):
    model, meta = load_model(checkpoint)
    root = Path(dataset)
    if root.is_file():
        sets = {"input": [read_sequence(root)]}
    elif split:
        sets = {split: load_split(root / split)}
    elif any(p.is_dir() for p in root.iterdir()):
        sets = {p.name: load_split(p) for p in sorted(root.iterdir()) if p.is_dir()}
    else:
        sets = {"input": load_split(root)}
    metrics = {}
    for name, seqs in sets.items():
        for s in seqs:
            if s.feature_dim != model.spec.in_channels:
                raise ValueError(f"{name}: {s.feature_dim} feature channels, checkpoint expects {model.spec.in_channels}")
        metrics[name] = evaluate(model, seqs)
    return {
        "schema_version": REPORT_SCHEMA,
        "kind": "eval",
        "task": model.spec.task,
        "checkpoint": {"path": str(checkpoint), "sha256": file_digest(checkpoint)},
        "final_metrics": metrics,
    }


def run_infer(checkpoint, sequence_path):
    model, _ = load_model(checkpoint)
    seq = read_sequence(sequence_path)
    if seq.feature_dim != model.spec.in_channels:
        raise ValueError(f"sequence has {seq.feature_dim} feature channels, checkpoint expects {model.spec.in_channels}")
    logits = predict_logits(model, [seq])[0]
    if model.spec.task == CLASSIFICATION:
        return {"task": CLASSIFICATION, "class": int(logits[0].argmax()), "logits": logits[0].tolist()}
    return {"task": model.spec.task, "classes": logits.argmax(axis=1).tolist()}


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    if report.get("loss_curve"):
        from .plotting import plot_training_curves
        plot_training_curves(report, path.with_suffix(".png"))
