"""Experiment records and their on-disk CSV format.

Files are plain CSV with a `# schema=1` first line and `# key=value` header
lines carrying the protocol metadata, then `time_s,input,output` rows.  The
input column is the stretch ratio for tension and the twist angle in degrees
for torsion.  All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

SCHEMA_VERSION = 1
MODES = ("tension", "torsion")
ROLES = ("train", "validation", "test-interpolation", "test-extrapolation")
_FIRST_OUTPUT_TOL = 1e-9


@dataclass
class ExperimentRecord:
    """One loading protocol with its sampled response."""

    id: str
    mode: str
    composition_name: str
    c: float
    rate: float
    rate_unit: str
    times: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    role: str = "train"
    geometry: tuple[float, float] | None = None  # (L mm, R mm), torsion only

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.mode not in MODES:
            raise ParseError(f"unknown mode {self.mode!r}")
        if self.role not in ROLES:
            raise ParseError(f"unknown role {self.role!r}")
        if not (self.times.shape == self.inputs.shape == self.outputs.shape):
            raise ParseError(f"{self.id}: column lengths differ")
        if np.any(np.diff(self.times) <= 0.0):
            raise ParseError(f"{self.id}: times must be strictly increasing")
        if self.times.size and abs(self.outputs[0]) > _FIRST_OUTPUT_TOL:
            raise ParseError(
                f"{self.id}: first output must be 0 (undeformed start), "
                f"got {self.outputs[0]!r}"
            )
        if self.mode == "torsion" and self.geometry is None:
            raise ParseError(f"{self.id}: torsion record needs geometry")

    @property
    def n_samples(self) -> int:
        return self.times.size


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_experiment_csv(record: ExperimentRecord, path: Path | str) -> None:
    lines = [f"# schema={SCHEMA_VERSION}"]
    meta = [
        ("id", record.id),
        ("mode", record.mode),
        ("composition_name", record.composition_name),
        ("c", repr(float(record.c))),
        ("rate", repr(float(record.rate))),
        ("rate_unit", record.rate_unit),
        ("role", record.role),
    ]
    if record.geometry is not None:
        meta.append(("geometry_L_mm", repr(float(record.geometry[0]))))
        meta.append(("geometry_R_mm", repr(float(record.geometry[1]))))
    lines += [f"# {k}={v}" for k, v in meta]
    lines.append("time_s,input,output")
    for t, x, y in zip(record.times, record.inputs, record.outputs):
        lines.append(f"{float(t)!r},{float(x)!r},{float(y)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_experiment_csv(path: Path | str) -> ExperimentRecord:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    meta: dict[str, str] = {}
    times, inputs, outputs = [], [], []
    header_seen = False
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# schema={SCHEMA_VERSION}":
            raise ParseError(f"{path}: bad or missing schema line ({first!r})")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if not header_seen:
                if line != "time_s,input,output":
                    raise ParseError(f"{path}:{lineno}: unexpected header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns")
            try:
                t, x, y = (float(p) for p in parts)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if times and t <= times[-1]:
                raise ParseError(
                    f"{path}:{lineno}: time {t!r} not increasing "
                    f"(previous {times[-1]!r})"
                )
            times.append(t)
            inputs.append(x)
            outputs.append(y)
    for key in ("id", "mode", "composition_name", "c", "rate", "rate_unit", "role"):
        if key not in meta:
            raise ParseError(f"{path}: missing header field {key!r}")
    geometry = None
    if "geometry_L_mm" in meta or "geometry_R_mm" in meta:
        try:
            geometry = (float(meta["geometry_L_mm"]), float(meta["geometry_R_mm"]))
        except (KeyError, ValueError):
            raise ParseError(f"{path}: incomplete geometry header") from None
    record = ExperimentRecord(
        id=meta["id"],
        mode=meta["mode"],
        composition_name=meta["composition_name"],
        c=float(meta["c"]),
        rate=float(meta["rate"]),
        rate_unit=meta["rate_unit"],
        times=np.array(times),
        inputs=np.array(inputs),
        outputs=np.array(outputs),
        role=meta["role"],
        geometry=geometry,
    )
    _check_composition_name(record, path)
    return record


def _check_composition_name(record: ExperimentRecord, path) -> None:
    # A known composition name must carry its tabulated c value; an unknown
    # name is accepted with the explicit c as authoritative.
    from .reference import COMPOSITIONS

    known = COMPOSITIONS.get(record.composition_name)
    if known is not None and abs(known - record.c) > 1e-12:
        raise ParseError(
            f"{path}: composition {record.composition_name!r} has c={known}, "
            f"file says {record.c!r}"
        )


def load_experiments(path: Path | str) -> list[ExperimentRecord]:
    """Load one CSV file or every *.csv in a directory (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise ParseError(f"no experiment CSVs found in {path}")
        return [load_experiment_csv(f) for f in files]
    return [load_experiment_csv(path)]


def save_experiments(records, out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for rec in records:
        p = out_dir / f"{rec.id}.csv"
        save_experiment_csv(rec, p)
        paths.append(p)
    return paths
