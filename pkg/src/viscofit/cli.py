"""Command-line interface.

Subcommands: synth, train, predict, eval, plot, inspect.  Exit codes:
0 success, 1 runtime error, 2 usage error.  The default output directory can
be set through the VISCOFIT_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .dataio import atomic_write_text, load_experiments, save_experiments
from .errors import ConfigError
from .evaluate import (
    evaluate_records,
    format_metric_table,
    metric_rows_csv,
    predict_record,
)
from .kinematics import TorsionGeometry
from .loading import LoadingProtocol, PicnnMaterial, simulate_tension, simulate_torsion
from .potential import (
    PicnnModel,
    L0Hyper,
    count_active_parameters,
    inference_gates,
)
from .reference import COMPOSITIONS, synthesize_dataset
from .serialize import load_model, save_model
from .svgplot import SvgPlot
from .training import TrainingSchedule, run_schedule
from .viscoelastic import GammaMlp, QlvModel


@dataclass
class RunConfig:
    """Run configuration; every field carries the published default."""

    stage_epochs: list = field(default_factory=lambda: [1000, 200, 200, 200, 200, 100, 1000])
    max_alternation_cycles: int = 5
    alternation_rel_tol: float = 0.005
    alpha_tension: float = 1.0
    alpha_torsion_target: float = 0.1
    alpha_fc_target: float = 5e-4
    alpha_nc_target: float = 1e-6
    alpha_ncfc_target: float = 1e-6
    batch_tension: int = 8
    batch_torsion: int = 4
    batches_per_experiment: int = 4
    lr_picnn: float = 0.005
    lr_gamma: float = 0.001
    loss_reduction: str = "sum"
    split_fraction: float = 0.8
    sampled_gates_stage7: bool = False
    conv_widths: list = field(default_factory=lambda: [30, 30])
    nc_widths: list = field(default_factory=lambda: [5, 5])
    coupling_transform: str = "softplus"
    qlv_form: str = "convolution"
    quadrature_order: int = 16
    curve_nodes: int = 48
    seed: int = 0
    threads: int = 1
    out_dir: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, spec: str | None) -> "RunConfig":
        if spec is None or spec == "paper-defaults":
            return cls()
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"no such config: {spec}")
        return cls.from_dict(json.loads(path.read_text()))

    def schedule(self) -> TrainingSchedule:
        return TrainingSchedule(
            stage_epochs=tuple(self.stage_epochs),
            max_alternation_cycles=self.max_alternation_cycles,
            alternation_rel_tol=self.alternation_rel_tol,
            alpha_tension=self.alpha_tension,
            alpha_torsion_target=self.alpha_torsion_target,
            alpha_fc_target=self.alpha_fc_target,
            alpha_nc_target=self.alpha_nc_target,
            alpha_ncfc_target=self.alpha_ncfc_target,
            batch_tension=self.batch_tension,
            batch_torsion=self.batch_torsion,
            batches_per_experiment=self.batches_per_experiment,
            lr_picnn=self.lr_picnn,
            lr_gamma=self.lr_gamma,
            loss_reduction=self.loss_reduction,
            split_fraction=self.split_fraction,
            sampled_gates_stage7=self.sampled_gates_stage7,
        )


def _default_out(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get("VISCOFIT_OUT") or "."
    return Path(out)


def _cmd_synth(args) -> int:
    records = synthesize_dataset(noise_std=args.noise, seed=args.seed,
                                 n_samples=args.samples,
                                 lambda_max=args.lambda_max,
                                 phi_max_deg=args.phi_max_deg)
    paths = save_experiments(records, _default_out(args))
    print(f"wrote {len(paths)} experiment files to {_default_out(args)}")
    return 0


def _cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    out_dir = Path(args.out or config.out_dir
                   or os.environ.get("VISCOFIT_OUT") or ".")
    records = load_experiments(args.data)
    model = PicnnModel(
        conv_widths=tuple(config.conv_widths),
        nc_widths=tuple(config.nc_widths),
        coupling=config.coupling_transform,
        hyper=L0Hyper(),
    ).initialize(config.seed)
    qlv = QlvModel(gamma_mlp=GammaMlp.initialize(seed=config.seed + 1),
                   tau=10.0, form=config.qlv_form)

    def checkpoint(stage, mdl, q):
        save_model(out_dir / f"checkpoint_stage{stage}.json", mdl, q,
                   config=asdict(config))
    model, qlv, trace = run_schedule(
        records, config.schedule(), seed=config.seed, model=model, qlv=qlv,
        threads=config.threads, quad_order=config.quadrature_order,
        curve_nodes=config.curve_nodes, checkpoint_cb=checkpoint,
    )
    save_model(out_dir / "model.json", model, qlv, config=asdict(config))
    trace.to_csv(out_dir / "trace.csv")
    counts = count_active_parameters(model)
    print(f"trained {len(trace.rows)} epochs; active parameters: "
          f"fc={counts.fc} nc={counts.nc} ncfc={counts.ncfc}")
    print(f"model written to {out_dir / 'model.json'}")
    return 0


def _protocol_from_args(args) -> LoadingProtocol:
    c = args.c
    if args.composition is not None:
        if args.composition not in COMPOSITIONS:
            raise ConfigError(f"unknown composition {args.composition!r}")
        c = COMPOSITIONS[args.composition]
    if c is None:
        raise ConfigError("need --c or --composition")
    if args.mode == "tension":
        duration = (args.lambda_max - 1.0) / args.rate
        return LoadingProtocol(mode="tension", rate=args.rate,
                               duration=duration,
                               time_step=duration / (args.samples - 1),
                               composition=c)
    duration = args.phi_max_deg / (args.rate / 60.0)
    return LoadingProtocol(mode="torsion", rate=args.rate, duration=duration,
                           time_step=duration / (args.samples - 1),
                           composition=c,
                           geometry=TorsionGeometry(args.length, args.radius))


def _cmd_predict(args) -> int:
    model, qlv, _ = load_model(args.model)
    material = PicnnMaterial(model, inference_gates(model))
    proto = _protocol_from_args(args)
    if proto.mode == "tension":
        curve = simulate_tension(proto, material, qlv)
        header = "time_s,stretch,sigma11_mpa,nominal_mpa"
    else:
        curve = simulate_torsion(proto, material, qlv,
                                 order=args.quadrature_order)
        header = "time_s,twist_deg,torque_nmm,tl_over_jp_mpa"
    lines = ["# schema=1", header]
    for t, x, y, z in zip(curve.times, curve.inputs, curve.outputs,
                          curve.normalized_outputs):
        lines.append(f"{float(t)!r},{float(x)!r},{float(y)!r},{float(z)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args) -> int:
    model, qlv, config = load_model(args.model)
    records = load_experiments(args.data)
    material = PicnnMaterial(model, inference_gates(model))
    seed = config.get("seed", 0) if args.split_seed is None else args.split_seed
    rows = evaluate_records(records, material, qlv, split_seed=seed,
                            split_fraction=config.get("split_fraction", 0.8))
    print(format_metric_table(rows))
    if args.out:
        atomic_write_text(args.out, metric_rows_csv(rows))
        print(f"wrote {args.out}")
    return 0


def _cmd_plot(args) -> int:
    model, qlv, _ = load_model(args.model)
    records = load_experiments(args.data)
    material = PicnnMaterial(model, inference_gates(model))
    out_dir = _default_out(args)
    groups: dict[tuple, list] = {}
    for rec in records:
        groups.setdefault((rec.mode, rec.rate), []).append(rec)
    written = []
    for (mode, rate), recs in sorted(groups.items()):
        if mode == "tension":
            plot = SvgPlot(f"tension, rate {rate:g} 1/s",
                           "stretch", "axial stress sigma11 (MPa)")
        else:
            plot = SvgPlot(f"torsion, rate {rate:g} deg/min",
                           "twist (deg)", "T L / J_p (MPa)")
        for rec in sorted(recs, key=lambda r: r.c):
            pred = predict_record(rec, material, qlv)
            if mode == "torsion":
                L, R = rec.geometry
                jp = TorsionGeometry(L, R).polar_moment
                scale = L / jp
            else:
                scale = 1.0
            step = max(1, rec.n_samples // 40)
            plot.points(rec.inputs[::step], rec.outputs[::step] * scale,
                        f"{rec.composition_name} data")
            plot.line(rec.inputs, pred * scale, f"{rec.composition_name} model")
        name = f"{mode}_rate{rate:g}.svg".replace("/", "-")
        plot.save(out_dir / name)
        written.append(name)
    print(f"wrote {len(written)} plots to {out_dir}")
    return 0


def _cmd_inspect(args) -> int:
    model, qlv, _ = load_model(args.model)
    counts = count_active_parameters(model)
    total = counts.fc + counts.nc + counts.ncfc
    sizes = model.group_sizes()
    print(f"active parameters: fc={counts.fc}/{sizes['fc']} "
          f"nc={counts.nc}/{sizes['nc']} ncfc={counts.ncfc}/{sizes['ncfc']} "
          f"(total {total}/{model.n_parameters()})")
    if qlv is not None and qlv.gamma_mlp is not None:
        gams = {name: qlv.gamma(c) for name, c in COMPOSITIONS.items()}
        print("relaxation coefficient by composition:")
        for name, g in gams.items():
            print(f"  {name}: {g:.4f}")
    if args.expression:
        from .render import render_expression
        print(render_expression(model))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscofit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate the synthetic dataset")
    s.add_argument("--out", default=None)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--lambda-max", type=float, default=2.0)
    s.add_argument("--phi-max-deg", type=float, default=360.0)
    s.set_defaults(fn=_cmd_synth)

    s = sub.add_parser("train", help="run the staged training schedule")
    s.add_argument("--data", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--config", default=None,
                   help="config JSON path or 'paper-defaults'")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(fn=_cmd_train)

    s = sub.add_parser("predict", help="simulate a protocol under a model")
    s.add_argument("--model", required=True)
    s.add_argument("--mode", choices=("tension", "torsion"), required=True)
    s.add_argument("--rate", type=float, required=True)
    s.add_argument("--c", type=float, default=None)
    s.add_argument("--composition", default=None)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--lambda-max", type=float, default=2.0)
    s.add_argument("--phi-max-deg", type=float, default=360.0)
    s.add_argument("--length", type=float, default=57.0)
    s.add_argument("--radius", type=float, default=5.0)
    s.add_argument("--quadrature-order", type=int, default=16)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_predict)

    s = sub.add_parser("eval", help="metric table for a model against data")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--split-seed", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("plot", help="SVG response-curve plots")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_plot)

    s = sub.add_parser("inspect", help="active parameters / closed form")
    s.add_argument("--model", required=True)
    s.add_argument("--expression", action="store_true")
    s.set_defaults(fn=_cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
