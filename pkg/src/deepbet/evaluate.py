"""Dice metric, threshold calibration, throughput benchmark, rotation sweep.

The benchmark times the full extraction path (preprocessing included, file
I/O and model loading excluded) and reports images per minute with a
hardware descriptor.
"""

from __future__ import annotations

import csv
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .resample import rotate_volume
from .volume import Volume

SAGITTAL_AXIS = 0   # left-right axis of a canonical RAS grid


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when both masks are empty."""
    a = np.asarray(a) != 0
    b = np.asarray(b) != 0
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def calibrate_threshold(gt: list[np.ndarray], pred: list[np.ndarray],
                        grid=None) -> float:
    """Grid threshold maximizing median Dice of pred vs thresholded gt.

    Ties resolve to the lowest threshold.
    """
    if grid is None:
        grid = [round(0.1 * k, 1) for k in range(1, 10)]
    if len(gt) != len(pred) or not gt:
        raise ValueError("need equal-length, non-empty gt/pred lists")
    best_t, best_d = None, -1.0
    for t in grid:
        d = float(np.median([dice(p, g >= t) for g, p in zip(gt, pred)]))
        if d > best_d:
            best_t, best_d = t, d
    return float(best_t)


def hardware_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    return (f"{cpu}, {os.cpu_count()} cpu(s), "
            f"{torch.get_num_threads()} torch thread(s)")


def benchmark(extract_fn, volumes: list[Volume], repetitions: int = 3) -> tuple[float, str]:
    """Median images-per-minute over repetitions of extracting all volumes."""
    if repetitions < 1 or not volumes:
        raise ValueError("need >= 1 repetition and >= 1 volume")
    rates = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for v in volumes:
            extract_fn(v)
        dt = time.perf_counter() - t0
        rates.append(60.0 * len(volumes) / dt)
    return float(np.median(rates)), hardware_descriptor()


def rotation_sweep(v: Volume, gt: Volume, extract_fn, angles,
                   threshold: float = 0.5) -> list[tuple[float, float]]:
    """Rotate image and truth rigidly about the sagittal axis, extract, score."""
    out = []
    for angle in angles:
        if angle == 0:
            v_r, gt_r = v, gt
        else:
            v_r = rotate_volume(v, SAGITTAL_AXIS, angle)
            gt_r = rotate_volume(gt, SAGITTAL_AXIS, angle)
        mask = extract_fn(v_r).mask
        out.append((float(angle), dice(mask.data, gt_r.data >= threshold)))
    return out


@dataclass
class DiceReport:
    entries: list[tuple[str, float]]
    threshold: float = 0.5
    images_per_minute: float | None = None
    hardware: str = ""

    def __post_init__(self):
        for sample_id, d in self.entries:
            if not 0.0 <= d <= 1.0:
                raise ValueError(f"dice {d} for {sample_id!r} outside [0, 1]")

    @property
    def median(self) -> float:
        return float(np.median([d for _, d in self.entries]))

    @property
    def min(self) -> float:
        return float(min(d for _, d in self.entries))

    @property
    def max(self) -> float:
        return float(max(d for _, d in self.entries))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "dice", "threshold"])
            for sample_id, d in self.entries:
                w.writerow([sample_id, f"{d:.6f}", f"{self.threshold:g}"])
            f.write(f"# median={self.median:.6f}\n")
            f.write(f"# min={self.min:.6f}\n")
            f.write(f"# max={self.max:.6f}\n")
            if self.images_per_minute is not None:
                f.write(f"# images_per_minute={self.images_per_minute:.3f}\n")
            if self.hardware:
                f.write(f"# hardware={self.hardware}\n")

    @classmethod
    def read_csv(cls, path) -> "DiceReport":
        entries = []
        threshold = 0.5
        ipm = None
        hardware = ""
        with open(path, newline="") as f:
            for row in csv.reader(f):
                if not row:
                    continue
                if row[0].startswith("#"):
                    text = ",".join(row).lstrip("# ")
                    key, _, value = text.partition("=")
                    if key == "images_per_minute":
                        ipm = float(value)
                    elif key == "hardware":
                        hardware = value
                    continue
                if row[0] == "id":
                    continue
                entries.append((row[0], float(row[1])))
                threshold = float(row[2])
        return cls(entries=entries, threshold=threshold,
                   images_per_minute=ipm, hardware=hardware)
