"""Lossless conversion between filled sample frames and [0,1] image tensors.

Each sensor row is min-max scaled by its declared absolute range, never by
observed or per-sample statistics, so rows stay independent and the mapping
inverts exactly. The grid is replicated across channels when an image-style
multi-channel stem is wanted; replication adds no information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import DatasetManifest, SampleFrame

# slack on the [0,1] check when inverting: admits float rounding, rejects
# corrupted tensors
DENORM_TOLERANCE = 1e-9


class NormalizationError(ValueError):
    """Frame or tensor unfit for (de)normalization."""


@dataclass
class ImageTensor:
    """Normalized channels x sensors x time grid for one sample."""

    data: np.ndarray
    sample_id: str

    @property
    def channels(self) -> int:
        return self.data.shape[0]


def normalize(frame: SampleFrame, manifest: DatasetManifest,
              channels: int = 1) -> ImageTensor:
    """Scale each sensor row into [0,1] by its absolute range.

    Element (c, i, j) = (x[i,j] - min_i) / (max_i - min_i) for every channel
    c. The frame must already be gap-filled.
    """
    if channels < 1:
        raise NormalizationError("channels must be >= 1")
    if frame.missing.any():
        raise NormalizationError(
            f"sample {frame.sample_id!r} still has missing cells; "
            f"run forward_fill first")
    if frame.values.shape != (manifest.n_sensors, manifest.time_steps):
        raise NormalizationError(
            f"frame shape {frame.values.shape} does not match manifest "
            f"({manifest.n_sensors}, {manifest.time_steps})")
    lo, hi = manifest.range_arrays()
    scaled = (frame.values - lo[:, None]) / (hi - lo)[:, None]
    data = np.broadcast_to(scaled, (channels,) + scaled.shape).copy()
    return ImageTensor(data=data, sample_id=frame.sample_id)


def denormalize(tensor: ImageTensor, manifest: DatasetManifest) -> SampleFrame:
    """Invert normalize: x[i,j] = v * (max_i - min_i) + min_i from channel 0.

    Rejects tensors with elements outside [0,1] beyond a 1e-9 tolerance,
    which would indicate corruption rather than rounding.
    """
    expected = (manifest.n_sensors, manifest.time_steps)
    if tensor.data.ndim != 3 or tensor.data.shape[1:] != expected:
        raise NormalizationError(
            f"tensor shape {tensor.data.shape} does not match manifest "
            f"(C, {expected[0]}, {expected[1]})")
    plane = tensor.data[0]
    low, high = plane.min(), plane.max()
    if low < -DENORM_TOLERANCE or high > 1.0 + DENORM_TOLERANCE:
        raise NormalizationError(
            f"tensor values [{low}, {high}] fall outside [0,1]; "
            f"refusing to invert a corrupt tensor")
    lo, hi = manifest.range_arrays()
    values = plane * (hi - lo)[:, None] + lo[:, None]
    return SampleFrame(sample_id=tensor.sample_id, values=values,
                       missing=np.zeros(expected, dtype=bool))
