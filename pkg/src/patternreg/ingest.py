"""Dataset loading, gap filling, and synthetic dataset generation.

On-disk layout (all UTF-8):

* ``manifest.json``: ``{"version": 1, "time_steps": int, "target_name": str,
  "sensors": [{"name": str, "min": float, "max": float,
  "kind": "measured"|"auxiliary"}]}``
* ``samples.csv``: header ``sample_id,sensor,t_index,value``; one row per
  observed cell, an empty value field (or an absent row) marks the cell
  missing.
* ``targets.csv``: header ``sample_id,target``; samples without a row are
  prediction-only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SENSOR_KINDS = ("measured", "auxiliary")


class DatasetError(ValueError):
    """Malformed manifest or data file, or a dataset invariant violation."""


@dataclass(frozen=True)
class SensorChannel:
    """A named sensor with its absolute physical range.

    The range is declared, not derived from observed data; every raw value of
    this sensor must fall inside it, and it is the basis of row-wise
    normalization.
    """

    name: str
    minimum: float
    maximum: float
    kind: str = "measured"

    def __post_init__(self):
        if not self.name:
            raise DatasetError("sensor name must be non-empty")
        if not (self.maximum > self.minimum):
            raise DatasetError(
                f"sensor {self.name!r}: max ({self.maximum}) must be strictly "
                f"greater than min ({self.minimum})")
        if self.kind not in SENSOR_KINDS:
            raise DatasetError(
                f"sensor {self.name!r}: kind must be one of {SENSOR_KINDS}")


@dataclass(frozen=True)
class DatasetManifest:
    """Sensor ordering and grid geometry shared by every frame of a dataset."""

    sensors: tuple[SensorChannel, ...]
    time_steps: int
    target_name: str = "yield"
    version: int = 1

    def __post_init__(self):
        if len(self.sensors) == 0:
            raise DatasetError("manifest needs at least one sensor")
        if self.time_steps < 1:
            raise DatasetError("time_steps must be >= 1")
        names = [s.name for s in self.sensors]
        if len(set(names)) != len(names):
            raise DatasetError("sensor names must be unique")

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def range_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([s.minimum for s in self.sensors])
        hi = np.array([s.maximum for s in self.sensors])
        return lo, hi


@dataclass
class SampleFrame:
    """One sample's raw sensors-by-time grid plus its missing-cell mask.

    ``values`` is float64 of shape (n_sensors, time_steps) in raw sensor
    units; cells flagged in ``missing`` hold 0.0 and carry no information.
    """

    sample_id: str
    values: np.ndarray
    missing: np.ndarray
    target: float | None = None


def _manifest_from_dict(doc: dict) -> DatasetManifest:
    try:
        sensors = tuple(
            SensorChannel(name=s["name"], minimum=float(s["min"]),
                          maximum=float(s["max"]),
                          kind=s.get("kind", "measured"))
            for s in doc["sensors"])
        return DatasetManifest(sensors=sensors,
                               time_steps=int(doc["time_steps"]),
                               target_name=str(doc["target_name"]),
                               version=int(doc.get("version", 1)))
    except KeyError as exc:
        raise DatasetError(f"manifest is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"manifest field has wrong type: {exc}") from None


def _manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "version": manifest.version,
        "time_steps": manifest.time_steps,
        "target_name": manifest.target_name,
        "sensors": [
            {"name": s.name, "min": s.minimum, "max": s.maximum, "kind": s.kind}
            for s in manifest.sensors
        ],
    }


def load_manifest(path: Path | str) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: not valid JSON ({exc})") from None
    return _manifest_from_dict(doc)


def load_dataset(manifest_path: Path | str, data_path: Path | str,
                 targets_path: Path | str | None = None,
                 ) -> tuple[DatasetManifest, list[SampleFrame]]:
    """Load a dataset from manifest + long-format samples CSV.

    Frames are returned in order of first appearance in the CSV; cells never
    mentioned in the CSV come back flagged missing. Raises DatasetError for
    unknown sensors, out-of-range t_index or values, and duplicate cells.
    """
    manifest = load_manifest(manifest_path)
    row_of = {s.name: i for i, s in enumerate(manifest.sensors)}
    lo, hi = manifest.range_arrays()
    n_s, n_t = manifest.n_sensors, manifest.time_steps

    frames: dict[str, SampleFrame] = {}
    data_path = Path(data_path)
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "sensor", "t_index", "value"]:
            raise DatasetError(
                f"{data_path}: expected header sample_id,sensor,t_index,value, "
                f"got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"{data_path}:{lineno}: expected 4 columns")
            sample_id, sensor, t_raw, v_raw = row
            i = row_of.get(sensor)
            if i is None:
                raise DatasetError(
                    f"{data_path}:{lineno}: unknown sensor {sensor!r}")
            try:
                t = int(t_raw)
            except ValueError:
                raise DatasetError(
                    f"{data_path}:{lineno}: bad t_index {t_raw!r}") from None
            if not 0 <= t < n_t:
                raise DatasetError(
                    f"{data_path}:{lineno}: t_index {t} outside [0, {n_t})")
            frame = frames.get(sample_id)
            if frame is None:
                frame = SampleFrame(sample_id,
                                    np.zeros((n_s, n_t)),
                                    np.ones((n_s, n_t), dtype=bool))
                frames[sample_id] = frame
            if not frame.missing[i, t]:
                raise DatasetError(
                    f"{data_path}:{lineno}: duplicate cell "
                    f"({sample_id}, {sensor}, {t})")
            if v_raw == "":
                continue  # explicitly-missing cell
            try:
                v = float(v_raw)
            except ValueError:
                raise DatasetError(
                    f"{data_path}:{lineno}: bad value {v_raw!r}") from None
            if not lo[i] <= v <= hi[i]:
                raise DatasetError(
                    f"{data_path}:{lineno}: value {v} outside sensor "
                    f"{sensor!r} range [{lo[i]}, {hi[i]}]")
            frame.values[i, t] = v
            frame.missing[i, t] = False

    if targets_path is not None and Path(targets_path).exists():
        with open(targets_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["sample_id", "target"]:
                raise DatasetError(
                    f"{targets_path}: expected header sample_id,target")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                sample_id, t_raw = row
                if sample_id not in frames:
                    raise DatasetError(
                        f"{targets_path}:{lineno}: target for unknown sample "
                        f"{sample_id!r}")
                try:
                    frames[sample_id].target = float(t_raw)
                except ValueError:
                    raise DatasetError(
                        f"{targets_path}:{lineno}: bad target {t_raw!r}"
                    ) from None

    return manifest, list(frames.values())


def load_dataset_dir(data_dir: Path | str
                     ) -> tuple[DatasetManifest, list[SampleFrame]]:
    """Load manifest.json / samples.csv / targets.csv from one directory."""
    d = Path(data_dir)
    return load_dataset(d / "manifest.json", d / "samples.csv",
                        d / "targets.csv")


def save_dataset(manifest: DatasetManifest, frames: list[SampleFrame],
                 out_dir: Path | str) -> None:
    """Write a dataset back to disk; exact inverse of load_dataset_dir.

    Missing cells are simply omitted from samples.csv. Floats are written in
    shortest round-trip form, so reload reproduces values bit for bit.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(_manifest_to_dict(manifest), indent=2) + "\n",
        encoding="utf-8")

    with open(out / "samples.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "sensor", "t_index", "value"])
        for frame in frames:
            for i, sensor in enumerate(manifest.sensors):
                for t in range(manifest.time_steps):
                    if not frame.missing[i, t]:
                        writer.writerow([frame.sample_id, sensor.name, t,
                                         repr(float(frame.values[i, t]))])

    with open(out / "targets.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "target"])
        for frame in frames:
            if frame.target is not None:
                writer.writerow([frame.sample_id, repr(float(frame.target))])


def forward_fill(frame: SampleFrame) -> SampleFrame:
    """Fill each missing cell with the nearest earlier value in its row.

    Leading missing cells (nothing earlier to copy) take the first observed
    value of the row. A row with no observed cells at all is an error.
    Returns a new frame; the input is untouched.
    """
    missing = frame.missing
    if missing.any():
        dead = np.flatnonzero(missing.all(axis=1))
        if dead.size:
            raise DatasetError(
                f"sample {frame.sample_id!r}: sensor row(s) {dead.tolist()} "
                f"are entirely missing and cannot be filled")
        n_s, n_t = frame.values.shape
        cols = np.where(~missing, np.arange(n_t), -1)
        src = np.maximum.accumulate(cols, axis=1)
        first_obs = (~missing).argmax(axis=1)
        lead = src < 0
        src[lead] = np.broadcast_to(first_obs[:, None], src.shape)[lead]
        values = frame.values[np.arange(n_s)[:, None], src]
    else:
        values = frame.values.copy()
    return SampleFrame(frame.sample_id, values,
                       np.zeros_like(missing), frame.target)


@dataclass(frozen=True)
class SynthSpec:
    """Geometry and corruption knobs for a synthetic dataset."""

    sensors: int
    time_steps: int
    samples: int
    missing_rate: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if self.sensors < 1 or self.samples < 1 or self.time_steps < 1:
            raise DatasetError("sensors, time_steps and samples must be >= 1")
        if not 0.0 <= self.missing_rate < 1.0:
            raise DatasetError("missing_rate must be in [0, 1)")
        if self.noise < 0.0:
            raise DatasetError("noise must be >= 0")


def _row_weights(n_sensors: int) -> np.ndarray:
    return 1.0 + np.arange(n_sensors) % 3


def _bump_width_fracs(n_sensors: int) -> np.ndarray:
    return 0.06 + 0.02 * (np.arange(n_sensors) % 3)


def pattern_target(amplitudes: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Target value as a smooth function of the per-row bump latents.

    For signed amplitudes p_i in [-1,1] (bright bump vs dark dip) and bump
    centers c_i in (0,1) (fractions of the time axis), with fixed row
    weights u_i = 1 + (i mod 3) and n = number of sensors:

        y = 0.5 + 0.28 * (sum_i u_i p_i / sum_i u_i)                 levels
            + 0.85 * mean_{i<n}(p_i p_{i+1} exp(-((c_i-c_{i+1})/0.2)^2))

    The second term rewards aligned same-sign bumps on adjacent rows and
    penalizes aligned opposite-sign ones, fading when the bumps do not
    overlap. Because the signed amplitudes have zero mean, that term has no
    component linear in the latents, nor in any per-row linear readout of
    the rendered pixels: a straight-line fit can only see the level term,
    while a pattern learner can also see the alignment interaction. It
    vanishes for single-sensor datasets. Both arguments may be (n_sensors,)
    or (n_samples, n_sensors).
    """
    p = np.atleast_2d(np.asarray(amplitudes, dtype=np.float64))
    c = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    u = _row_weights(p.shape[1])
    level = (p * u).sum(axis=1) / u.sum()
    if p.shape[1] > 1:
        gap = (c[:, :-1] - c[:, 1:]) / 0.2
        overlap = (p[:, :-1] * p[:, 1:] * np.exp(-gap * gap)).mean(axis=1)
    else:
        overlap = np.zeros(p.shape[0])
    y = 0.5 + 0.28 * level + 0.85 * overlap
    return y if np.asarray(amplitudes).ndim > 1 else float(y[0])


def generate_synthetic(spec: SynthSpec, seed: int, return_latents: bool = False):
    """Build a dataset whose target is a known function of visual patterns.

    Each sensor row carries one Gaussian bump; its amplitude and center are
    the latent parameters, and the target is ``pattern_target`` of those
    latents (exactly, regardless of noise). ``noise`` is the standard
    deviation of measurement noise added to the rendered grid, as a fraction
    of each sensor's range. Missing cells are injected at ``missing_rate``
    but never wipe out a whole row. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    n, s, t = spec.samples, spec.sensors, spec.time_steps

    row_min = -10.0 + 3.0 * np.arange(s)
    row_width = 5.0 * (1.0 + np.arange(s) % 4)
    sensors = tuple(
        SensorChannel(name=f"sensor_{i:02d}", minimum=float(row_min[i]),
                      maximum=float(row_min[i] + row_width[i]))
        for i in range(s))
    manifest = DatasetManifest(sensors=sensors, time_steps=t)

    amps = rng.uniform(-1.0, 1.0, size=(n, s))
    centers = rng.uniform(0.15, 0.85, size=(n, s))
    targets = pattern_target(amps, centers)

    widths = _bump_width_fracs(s) * t
    j = np.arange(t)
    # unit-scale grid in [0,1]; identical for every sensor range
    offs = j[None, None, :] - centers[:, :, None] * (t - 1)
    unit = 0.5 + 0.4 * amps[:, :, None] * np.exp(
        -0.5 * (offs / widths[None, :, None]) ** 2)
    if spec.noise > 0:
        unit = unit + rng.normal(0.0, spec.noise, size=unit.shape)
        np.clip(unit, 0.0, 1.0, out=unit)

    values = row_min[None, :, None] + row_width[None, :, None] * unit

    if spec.missing_rate > 0:
        mask = rng.random(size=(n, s, t)) < spec.missing_rate
        full_rows = mask.all(axis=2)
        if full_rows.any():
            keep = rng.integers(0, t, size=(n, s))
            ii, jj = np.nonzero(full_rows)
            mask[ii, jj, keep[ii, jj]] = False
    else:
        mask = np.zeros((n, s, t), dtype=bool)

    values[mask] = 0.0
    width = len(str(n - 1))
    frames = [
        SampleFrame(f"synth_{k:0{width}d}", values[k], mask[k],
                    float(targets[k]))
        for k in range(n)
    ]
    if return_latents:
        return manifest, frames, {"amplitude": amps, "center": centers}
    return manifest, frames
