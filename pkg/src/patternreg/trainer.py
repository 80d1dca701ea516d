"""k-fold cross-validated training of the regression network.

Every source of randomness is derived from the run seed: the fold plan from
``seed``, each fold's initialization from ``(seed, fold)``, and each epoch's
batch order from ``(seed, fold, epoch)``. Folds share no mutable state, so
they may train in parallel (forked worker processes where the platform
allows, threads otherwise) without changing any result; two runs with the
same configuration and seed produce identical reports and checkpoints.

Targets are regressed in raw units, so reported MAE/RMSE are directly
comparable across models and baselines.
"""

from __future__ import annotations

import json
import multiprocessing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics as met
from .autograd import Tensor, l1_loss, mse_loss, no_grad
from .imageize import normalize
from .ingest import DatasetManifest, SampleFrame, forward_fill
from .model import ArchConfig, RegressionNet, arch_config, build
from .optim import OptimizerConfig, make_optimizer

LOSS_KINDS = ("mse", "l1")
CHECKPOINT_VERSION = 1


class TrainingError(ValueError):
    """Invalid training configuration or unusable dataset."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite mid-training."""


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint files."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 1000
    loss: str = "mse"
    folds: int = 5
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    arch: ArchConfig = field(default_factory=lambda: arch_config("tiny"))
    jobs: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.folds < 2:
            raise TrainingError("folds must be >= 2")
        if self.loss not in LOSS_KINDS:
            raise TrainingError(f"loss must be one of {LOSS_KINDS}")
        if self.jobs < 1:
            raise TrainingError("jobs must be >= 1")
        # the run-level learning rate governs
        self.optimizer = replace(self.optimizer, lr=self.lr)


@dataclass(frozen=True)
class FoldPlan:
    assignments: dict[str, int]
    n_folds: int

    def fold_of(self, sample_ids) -> np.ndarray:
        return np.array([self.assignments[sid] for sid in sample_ids])

    def sizes(self) -> list[int]:
        counts = [0] * self.n_folds
        for f in self.assignments.values():
            counts[f] += 1
        return counts


def make_folds(sample_ids, k: int, seed: int) -> FoldPlan:
    """Deterministic shuffle + round-robin partition into k balanced folds."""
    ids = list(sample_ids)
    if len(set(ids)) != len(ids):
        raise TrainingError("sample ids must be unique")
    if not 2 <= k <= len(ids):
        raise TrainingError(
            f"folds must satisfy 2 <= k <= {len(ids)}, got {k}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    assignments = {ids[int(p)]: pos % k for pos, p in enumerate(perm)}
    return FoldPlan(assignments=assignments, n_folds=k)


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def prepare_arrays(manifest: DatasetManifest, frames: list[SampleFrame],
                   channels: int, require_targets: bool = True):
    """Fill, normalize, and stack frames into float32 training arrays."""
    xs = np.empty((len(frames), channels, manifest.n_sensors,
                   manifest.time_steps), dtype=np.float32)
    ys = np.empty((len(frames), 1), dtype=np.float32)
    ids = []
    for i, frame in enumerate(frames):
        filled = forward_fill(frame)
        xs[i] = normalize(filled, manifest, channels).data
        if frame.target is None:
            if require_targets:
                raise TrainingError(
                    f"sample {frame.sample_id!r} has no target")
            ys[i] = np.nan
        else:
            ys[i] = frame.target
        ids.append(frame.sample_id)
    return xs, ys, ids


def _loss_fn(kind: str):
    return mse_loss if kind == "mse" else l1_loss


def _train_fold(fold: int, xs, ys, train_idx, val_idx, config: TrainConfig):
    net = build(config.arch, seed=_fold_seed(config.seed, fold))
    opt = make_optimizer(config.optimizer, net.parameters())
    loss_fn = _loss_fn(config.loss)
    n_train = train_idx.size
    y_val = ys[val_idx, 0].astype(np.float64)

    records = []
    best = None  # (mae, epoch, metrics triple, param snapshot)
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            (config.seed, fold, epoch)).permutation(n_train)
        shuffled = train_idx[order]
        loss_sum = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = shuffled[start:start + config.batch_size]
            pred = net(Tensor(xs[idx]))
            loss = loss_fn(pred, Tensor(ys[idx]))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"fold {fold}, epoch {epoch}: training loss became "
                    f"{value}; try a lower learning rate")
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += value * idx.size
        train_loss = loss_sum / n_train

        preds = _forward_in_batches(net, xs[val_idx], config.batch_size)
        val_mae = met.mae(preds, y_val)
        val_rmse = met.rmse(preds, y_val)
        val_r2 = met.r2(preds, y_val)
        records.append(met.EpochRecord(fold=fold, epoch=epoch,
                                       train_loss=train_loss,
                                       val_mae=val_mae, val_rmse=val_rmse,
                                       val_r2=val_r2))
        if best is None or val_mae < best[0]:
            snapshot = {name: t.data.copy()
                        for name, t in net.parameters().items()}
            best = (val_mae, epoch, (val_mae, val_rmse, val_r2), snapshot)

    return records, best


# dataset arrays handed to forked fold workers; populated just before the
# fork so children inherit them without pickling the full dataset
_WORKER_DATA: dict[str, np.ndarray] = {}


def _fold_worker(args):
    fold, train_idx, val_idx, config = args
    return _train_fold(fold, _WORKER_DATA["xs"], _WORKER_DATA["ys"],
                       train_idx, val_idx, config)


def _run_folds(fold_indices, xs, ys, config: TrainConfig, jobs: int):
    if jobs <= 1:
        return [_train_fold(f, xs, ys, tr, va, config)
                for f, tr, va in fold_indices]
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        # no fork on this platform; threads keep results identical but
        # overlap less (python-level graph bookkeeping holds the GIL)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_fold, f, xs, ys, tr, va, config)
                       for f, tr, va in fold_indices]
            return [fut.result() for fut in futures]
    _WORKER_DATA["xs"] = xs
    _WORKER_DATA["ys"] = ys
    try:
        with ctx.Pool(processes=jobs) as pool:
            return pool.map(_fold_worker,
                            [(f, tr, va, config) for f, tr, va in fold_indices],
                            chunksize=1)
    finally:
        _WORKER_DATA.clear()


def _forward_in_batches(net: RegressionNet, xs: np.ndarray,
                        batch_size: int) -> np.ndarray:
    preds = np.empty(xs.shape[0], dtype=np.float64)
    with no_grad():
        for start in range(0, xs.shape[0], batch_size):
            out = net(Tensor(xs[start:start + batch_size]))
            preds[start:start + batch_size] = out.data[:, 0]
    return preds


def train(dataset, config: TrainConfig, out_dir: Path | str | None = None,
          ) -> tuple[list[RegressionNet], met.MetricsReport]:
    """Cross-validated training over a (manifest, frames) dataset.

    For each fold, trains on the other folds and validates on it, recording
    per-epoch train loss and validation MAE/RMSE/R2. The returned nets carry
    each fold's best-validation-MAE parameters; the summary averages each
    fold's metrics at its best epoch. When ``out_dir`` is given the best
    checkpoints are saved there as fold_<i>.ckpt.{json,bin}.
    """
    manifest, frames = dataset
    if config.folds > len(frames):
        raise TrainingError(
            f"folds={config.folds} exceeds sample count {len(frames)}")
    xs, ys, ids = prepare_arrays(manifest, frames, config.arch.channels_in)
    plan = make_folds(ids, config.folds, config.seed)
    fold_of = plan.fold_of(ids)

    baselines = _compute_baselines(xs, ys, fold_of)

    jobs = min(config.jobs, config.folds)
    fold_indices = [(f, np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f))
                    for f in range(config.folds)]
    results = _run_folds(fold_indices, xs, ys, config, jobs)

    records = []
    nets = []
    best_triples = []
    for fold, (fold_records, best) in enumerate(results):
        records.extend(fold_records)
        best_triples.append(best[2])
        params = {name: Tensor(arr, requires_grad=True)
                  for name, arr in best[3].items()}
        nets.append(RegressionNet(config.arch, params))

    summary = met.Summary(
        mae=float(np.mean([t[0] for t in best_triples])),
        rmse=float(np.mean([t[1] for t in best_triples])),
        r2=float(np.mean([t[2] for t in best_triples])))
    report = met.MetricsReport(records=records, summary=summary,
                               baselines=baselines)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for fold, net in enumerate(nets):
            save_checkpoint(net, out / f"fold_{fold}")
    return nets, report


def _compute_baselines(xs, ys, fold_of) -> met.Baselines:
    feats = xs[:, 0].reshape(xs.shape[0], -1).astype(np.float64)
    targets = ys[:, 0].astype(np.float64)
    linreg = met.linreg_baseline(feats, targets, fold_of)
    return met.Baselines(
        mean_predictor_mae=met.mean_predictor_mae(targets, fold_of),
        linreg_mae=linreg[0], linreg_rmse=linreg[1], linreg_r2=linreg[2])


def predict(net: RegressionNet, frames: list[SampleFrame],
            manifest: DatasetManifest, batch_size: int = 256,
            ) -> list[tuple[str, float]]:
    """Fill, normalize, and run frames through a trained net (raw units)."""
    xs, _, ids = prepare_arrays(manifest, frames, net.config.channels_in,
                                require_targets=False)
    preds = _forward_in_batches(net, xs, batch_size)
    return list(zip(ids, (float(p) for p in preds)))


def _checkpoint_paths(prefix: Path | str) -> tuple[Path, Path]:
    base = str(prefix)
    if base.endswith(".ckpt"):
        base = base[: -len(".ckpt")]
    return Path(base + ".ckpt.json"), Path(base + ".ckpt.bin")


def save_checkpoint(net: RegressionNet, prefix: Path | str) -> None:
    """Write <prefix>.ckpt.json (manifest) and <prefix>.ckpt.bin (float32 LE)."""
    json_path, bin_path = _checkpoint_paths(prefix)
    entries = []
    blobs = []
    offset = 0
    for name, t in net.parameters().items():
        data = np.ascontiguousarray(t.data, dtype="<f4")
        entries.append({"name": name, "shape": list(t.data.shape),
                        "offset": offset})
        blobs.append(data.tobytes())
        offset += len(blobs[-1])
    doc = {
        "version": CHECKPOINT_VERSION,
        "arch": {
            "arch": net.config.arch,
            "stem_channels": net.config.stem_channels,
            "blocks": [list(b) for b in net.config.blocks],
            "head_hidden": net.config.head_hidden,
            "channels_in": net.config.channels_in,
            "stem_stride": net.config.stem_stride,
            "min_input_hw": net.config.min_input_hw,
        },
        "params": entries,
    }
    json_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    bin_path.write_bytes(b"".join(blobs))


def load_checkpoint(prefix: Path | str) -> RegressionNet:
    json_path, bin_path = _checkpoint_paths(prefix)
    try:
        doc = json.loads(json_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"missing checkpoint manifest {json_path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{json_path}: not valid JSON ({exc})") from None
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{json_path}: version {doc.get('version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    try:
        arch_doc = dict(doc["arch"])
        arch_doc["blocks"] = tuple(tuple(b) for b in arch_doc["blocks"])
        config = ArchConfig(**arch_doc)
        entries = doc["params"]
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{json_path}: malformed ({exc})") from None

    try:
        blob = bin_path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"missing checkpoint blob {bin_path}") from None

    params: dict[str, Tensor] = {}
    end = 0
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(blob):
            raise CheckpointError(
                f"{bin_path}: truncated at parameter {entry['name']!r} "
                f"(need {end} bytes, have {len(blob)})")
        arr = np.frombuffer(blob, dtype="<f4", count=count,
                            offset=start).reshape(shape)
        params[entry["name"]] = Tensor(
            arr.astype(np.float32, copy=True), requires_grad=True)
    if end != len(blob):
        raise CheckpointError(
            f"{bin_path}: {len(blob) - end} trailing bytes disagree with "
            f"the parameter table")
    net = RegressionNet(config, params)
    _validate_param_table(net)
    return net


def _validate_param_table(net: RegressionNet) -> None:
    expected = build(net.config, seed=0)
    exp_shapes = {n: t.data.shape for n, t in expected.parameters().items()}
    got_shapes = {n: t.data.shape for n, t in net.parameters().items()}
    if exp_shapes != got_shapes:
        missing = sorted(set(exp_shapes) ^ set(got_shapes))
        detail = f"mismatched parameters {missing}" if missing else \
            "parameter shapes disagree with the architecture"
        raise CheckpointError(f"checkpoint does not fit its arch config: {detail}")
