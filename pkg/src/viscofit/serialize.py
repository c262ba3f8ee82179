"""Model checkpoint format.

A single JSON document holds the potential network (shapes, constraint tags,
theta_bar, log_alpha), the relaxation model and a config snapshot, under a
schema-version field.  Floats are serialized with Python's shortest
round-trip repr, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataio import atomic_write_text
from .errors import ParseError
from .potential import L0Hyper, PicnnModel
from .viscoelastic import GammaMlp, QlvModel

MODEL_SCHEMA_VERSION = 1


def _matrix_payload(m):
    return {
        "name": m.name,
        "group": m.group,
        "nonneg": m.nonneg,
        "shape": list(m.theta_bar.shape),
        "theta_bar": m.theta_bar.ravel().tolist(),
        "log_alpha": m.log_alpha.ravel().tolist(),
    }


def save_model(path: Path | str, model: PicnnModel, qlv: QlvModel | None = None,
               config: dict | None = None) -> None:
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": "convex-potential-qlv",
        "config": config or {},
        "potential": {
            "conv_widths": list(model.conv_widths),
            "nc_widths": list(model.nc_widths),
            "coupling": model.coupling,
            "hyper": {
                "gamma_gate": model.hyper.gamma_gate,
                "zeta": model.hyper.zeta,
                "beta": model.hyper.beta,
                "log_alpha_init_std": model.hyper.log_alpha_init_std,
                "mc_samples": model.hyper.mc_samples,
            },
            "matrices": [_matrix_payload(m) for m in model.matrices],
        },
        "qlv": None if qlv is None else {
            "tau": qlv.tau,
            "form": qlv.form,
            "fixed_gamma": qlv.fixed_gamma,
            "gamma_mlp": None if qlv.gamma_mlp is None else {
                "w_hidden": qlv.gamma_mlp.w_hidden.tolist(),
                "w_out": qlv.gamma_mlp.w_out.tolist(),
            },
        },
    }
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_model(path: Path | str):
    """Returns (model, qlv_or_None, config_dict)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read checkpoint ({exc})") from None
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ParseError(
            f"{path}: unsupported schema version {doc.get('schema_version')!r}"
        )
    pot = doc["potential"]
    model = PicnnModel(
        conv_widths=tuple(pot["conv_widths"]),
        nc_widths=tuple(pot["nc_widths"]),
        coupling=pot["coupling"],
        hyper=L0Hyper(**pot["hyper"]),
    )
    by_name = {m["name"]: m for m in pot["matrices"]}
    for m in model.matrices:
        payload = by_name.get(m.name)
        if payload is None:
            raise ParseError(f"{path}: missing matrix {m.name!r}")
        shape = tuple(payload["shape"])
        if shape != m.theta_bar.shape:
            raise ParseError(
                f"{path}: matrix {m.name!r} shape {shape} != {m.theta_bar.shape}"
            )
        if payload["nonneg"] != m.nonneg or payload["group"] != m.group:
            raise ParseError(f"{path}: matrix {m.name!r} tags do not match")
        m.theta_bar[...] = np.array(payload["theta_bar"]).reshape(shape)
        m.log_alpha[...] = np.array(payload["log_alpha"]).reshape(shape)
    qlv = None
    if doc.get("qlv") is not None:
        q = doc["qlv"]
        mlp = None
        if q.get("gamma_mlp") is not None:
            mlp = GammaMlp(
                w_hidden=np.array(q["gamma_mlp"]["w_hidden"]),
                w_out=np.array(q["gamma_mlp"]["w_out"]),
            )
        qlv = QlvModel(gamma_mlp=mlp, fixed_gamma=q.get("fixed_gamma"),
                       tau=q["tau"], form=q["form"])
    return model, qlv, doc.get("config", {})
