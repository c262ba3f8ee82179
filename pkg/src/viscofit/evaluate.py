"""Model evaluation against experiment records, and the metrics table."""

from __future__ import annotations

import numpy as np

from .dataio import ExperimentRecord
from .kinematics import TorsionGeometry
from .loading import (
    DEG2RAD,
    Material,
    tension_stress_curve,
    torsion_torque_curve,
)
from .metrics import report
from .training import split_train_validation
from .viscoelastic import QlvModel, StressHistory, qlv_convolve


def predict_record(rec: ExperimentRecord, material: Material,
                   qlv: QlvModel | None, quad_order: int = 16) -> np.ndarray:
    """Model output on the record's own time/input grid."""
    if rec.mode == "tension":
        inst = tension_stress_curve(rec.inputs, rec.c, material)
    else:
        L, R = rec.geometry
        inst = torsion_torque_curve(rec.inputs * DEG2RAD,
                                    TorsionGeometry(L, R), rec.c, material,
                                    order=quad_order)
    if qlv is None:
        return inst
    kern = qlv.kernel_for(rec.c)
    return qlv_convolve(StressHistory(rec.times, inst), kern, form=qlv.form).values


def evaluate_records(records, material: Material, qlv: QlvModel | None,
                     split_seed: int | None = None,
                     split_fraction: float = 0.8) -> list[dict]:
    """Metric rows per record.

    Train-role records get a train and a test row (the held-out sample split,
    reproduced from ``split_seed``); hold-out compositions get a single test
    row over the whole curve.
    """
    rows = []
    train_map, val_map = ({}, {})
    if split_seed is not None:
        train_map, val_map = split_train_validation(records, split_fraction,
                                                    split_seed)
    for rec in records:
        pred = predict_record(rec, material, qlv)
        splits: list[tuple[str, np.ndarray | None]]
        if rec.role == "train" and rec.id in train_map:
            splits = [("train", train_map[rec.id]), ("test", val_map[rec.id])]
        elif rec.role == "train":
            splits = [("train", None)]
        else:
            splits = [("test", None)]
        for split_name, idx in splits:
            p = pred if idx is None else pred[idx]
            t = rec.outputs if idx is None else rec.outputs[idx]
            m = report(p, t)
            rows.append({
                "composition": rec.composition_name,
                "mode": rec.mode,
                "rate": rec.rate,
                "rate_unit": rec.rate_unit,
                "role": rec.role,
                "split": split_name,
                "r_squared": m.r_squared,
                "smape": m.smape,
                "n": m.n_points,
            })
    return rows


def format_metric_table(rows: list[dict]) -> str:
    header = (f"{'composition':<12} {'mode':<8} {'rate':>10} {'split':<6} "
              f"{'R^2':>8} {'sMAPE%':>8} {'n':>5}")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['composition']:<12} {r['mode']:<8} {r['rate']:>10g} "
            f"{r['split']:<6} {r['r_squared']:>8.4f} {r['smape']:>8.2f} "
            f"{r['n']:>5d}"
        )
    return "\n".join(lines)


def metric_rows_csv(rows: list[dict]) -> str:
    lines = ["# schema=1",
             "composition,mode,rate,rate_unit,role,split,r_squared,smape,n"]
    for r in rows:
        lines.append(
            f"{r['composition']},{r['mode']},{float(r['rate'])!r},{r['rate_unit']},"
            f"{r['role']},{r['split']},{float(r['r_squared'])!r},"
            f"{float(r['smape'])!r},{r['n']}"
        )
    return "\n".join(lines) + "\n"
