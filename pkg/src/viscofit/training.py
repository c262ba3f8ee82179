"""Staged training of the potential network and the relaxation model.

Seven stages: fit the instantaneous response on the fastest tension rate,
then alternate relaxation-only and potential-only refinement across rates
until converged, ramp the torsion loss in, and finally ramp the L0 sparsity
penalties.  Adam throughout, with a non-negativity projection after every
step on the constrained matrices.

Every stochastic choice (gate noise, batch membership) is drawn from
counter-based generators keyed on (seed, epoch, batch), so a run is exactly
replayable.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernel_numpy import sigmoid
from ._kernels import kernel
from .dataio import ExperimentRecord, atomic_write_text
from .errors import ConfigError, TrainingError
from .loading import DEG2RAD, gauss_legendre
from .potential import (
    PicnnModel,
    count_active_parameters,
    effective_grad_map,
    effective_weights,
    expected_l0_by_group,
    inference_gates,
    nc_backward,
    nc_forward,
    project_nonnegative,
    sample_gate_noise,
    sample_gates_with_derivative,
    deterministic_gates_with_derivative,
    _conv_weight_views,
)
from .viscoelastic import GammaMlp, QlvModel, gamma_mlp_gradients, relaxation_matrix


@dataclass
class LossWeights:
    alpha_tension: float = 1.0
    alpha_torsion: float = 0.0
    alpha_fc: float = 0.0
    alpha_nc: float = 0.0
    alpha_ncfc: float = 0.0

    def __post_init__(self):
        for name in ("alpha_tension", "alpha_torsion", "alpha_fc",
                     "alpha_nc", "alpha_ncfc"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class StageSpec:
    index: int          # 1..7, as recorded in the trace
    epochs: int
    trainable: str      # "picnn" | "gamma" | "both"
    data: str           # "tension-fastest" | "tension-all" | "all"
    use_qlv: bool
    ramp_torsion: bool = False
    ramp_sparsity: bool = False
    # gates are sampled only where the Monte Carlo L0 estimator is active;
    # the data-fitting stages use the deterministic gates (sampling there
    # only injects gradient noise and stalls the alternation)
    stochastic_gates: bool = False


@dataclass
class TrainingSchedule:
    """The staged plan with its defaults.

    ``stage_epochs`` are the per-stage epoch counts; stages 2/3 and 4/5 form
    relaxation/potential alternation cycles that repeat (reusing the stage
    4/5 budgets) until the tension loss improves by less than
    ``alternation_rel_tol`` over a full cycle, bounded by
    ``max_alternation_cycles``.
    """

    stage_epochs: tuple = (1000, 200, 200, 200, 200, 100, 1000)
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
    loss_reduction: str = "sum"  # "sum": squared L2 over the sampled curve
    split_fraction: float = 0.8
    # train the sparsity stage on sampled gates (the Monte Carlo estimator,
    # model.hyper.mc_samples draws per batch) instead of the deterministic
    # gates; off by default — the sampled estimator is noisy enough to cost
    # fit quality at this data scale
    sampled_gates_stage7: bool = False

    def __post_init__(self):
        if len(self.stage_epochs) != 7:
            raise ConfigError("stage_epochs must have exactly 7 entries")
        if self.loss_reduction not in ("sum", "mean"):
            raise ConfigError("loss_reduction must be 'sum' or 'mean'")

    @classmethod
    def paper_defaults(cls) -> "TrainingSchedule":
        return cls()


# -- loss ---------------------------------------------------------------


def loss_multi(predictions, targets, weights: LossWeights, model: PicnnModel,
               modes=None, reduction: str = "sum") -> float:
    """Multi-experiment data loss plus expected-L0 penalties.

    ``predictions``/``targets`` are parallel lists of per-experiment arrays;
    ``modes`` names each experiment's loading mode (default all tension).
    Residuals are normalized by each experiment's target range; each mode's
    term is the mean over its experiments of the squared L2 norm of the
    normalized residual ("mean" divides by the sample count as well).
    Constant-target experiments cannot be normalized and are excluded with a
    warning.
    """
    if modes is None:
        modes = ["tension"] * len(predictions)
    if not (len(predictions) == len(targets) == len(modes)):
        raise ConfigError("predictions, targets and modes lengths differ")
    per_mode: dict[str, list[float]] = {"tension": [], "torsion": []}
    for pred, tgt, mode in zip(predictions, targets, modes):
        pred = np.asarray(pred, dtype=float)
        tgt = np.asarray(tgt, dtype=float)
        rng = float(tgt.max() - tgt.min())
        if rng <= 0.0:
            warnings.warn("constant-target experiment excluded from the loss")
            continue
        r = (pred - tgt) / rng
        val = float(r @ r)
        if reduction == "mean":
            val /= r.size
        per_mode[mode].append(val)
    total = 0.0
    if per_mode["tension"]:
        total += weights.alpha_tension * float(np.mean(per_mode["tension"]))
    if per_mode["torsion"]:
        total += weights.alpha_torsion * float(np.mean(per_mode["torsion"]))
    l0 = expected_l0_by_group(model)
    total += (weights.alpha_fc * l0["fc"] + weights.alpha_nc * l0["nc"]
              + weights.alpha_ncfc * l0["ncfc"])
    return total


# -- optimizer ----------------------------------------------------------


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """In-place Adam update with bias correction.

    Raises TrainingError on non-finite gradients so a broken stage aborts
    loudly instead of poisoning the parameters.
    """
    state.step_count += 1
    bc1 = 1.0 - state.beta1**state.step_count
    bc2 = 1.0 - state.beta2**state.step_count
    for key, p in params.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {key!r}")
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# -- data preparation ----------------------------------------------------


def _stable_key(seed: int, *parts) -> np.random.Generator:
    h = hashlib.sha256(("|".join(str(p) for p in parts)).encode()).digest()
    word = int.from_bytes(h[:8], "little")
    return np.random.Generator(np.random.Philox(key=(np.uint64(seed), np.uint64(word))))


def split_train_validation(records, fraction: float = 0.8, seed: int = 0):
    """Per-record sample-level split for the train-role records.

    Returns (train_idx, val_idx): maps record.id -> sorted index arrays.
    Hold-out-role records (test-interpolation / test-extrapolation) appear in
    neither map.  Deterministic for a given seed.
    """
    if not (0.0 < fraction < 1.0):
        raise ConfigError("fraction must be in (0, 1)")
    train_map, val_map = {}, {}
    for rec in records:
        if rec.role != "train":
            continue
        n = rec.n_samples
        if n < 5:
            raise ConfigError(f"{rec.id}: need at least 5 samples to split")
        rng = _stable_key(seed, "split", rec.id)
        perm = rng.permutation(n)
        n_train = int(round(fraction * n))
        train_map[rec.id] = np.sort(perm[:n_train])
        val_map[rec.id] = np.sort(perm[n_train:])
    return train_map, val_map


@dataclass
class _CompiledExp:
    rec: ExperimentRecord
    mode: str
    c: float
    n_times: int
    I: np.ndarray          # (N, 2) invariant pairs at the kernel points
    Idot: np.ndarray       # (N, 2) directional-derivative coefficients
    emit: np.ndarray | None  # (n_times, N) map from kernel outputs to the
                             # instantaneous response (None: identity)
    target: np.ndarray
    inv_range: float
    A_relax: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray


def _cheb_nodes(a: float, b: float, m: int) -> np.ndarray:
    k = np.arange(m)
    x = -np.cos(np.pi * k / (m - 1))  # Chebyshev-Lobatto, ascending
    return 0.5 * (a + b) + 0.5 * (b - a) * x


def _barycentric_matrix(nodes: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Rows of barycentric interpolation weights: f(queries) ~= M @ f(nodes)."""
    w = np.ones(nodes.size)
    for k in range(nodes.size):
        w[k] = 1.0 / np.prod(nodes[k] - np.delete(nodes, k))
    diff = queries[:, None] - nodes[None, :]
    exact_row, exact_col = np.nonzero(diff == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        M = w[None, :] / diff
        M /= M.sum(axis=1, keepdims=True)
    # queries that coincide with a node (the interval endpoints always do)
    for r, c in zip(exact_row, exact_col):
        M[r, :] = 0.0
        M[r, c] = 1.0
    return M


def _compile_experiment(rec: ExperimentRecord, tau: float,
                        train_idx, val_idx, quad_order: int = 16,
                        curve_nodes: int = 48):
    """Precompute the per-experiment evaluation system.

    The instantaneous response samples the potential only along a 1-d
    manifold (tension: the stretch; torsion: the single invariant value), so
    when ``curve_nodes`` > 0 the network is evaluated at Chebyshev nodes of
    that manifold and the response is recovered through a fixed barycentric
    interpolation matrix — exact to rounding for these smooth responses, and
    much cheaper than evaluating every sample (and every quadrature point)
    directly.  ``curve_nodes=0`` keeps the direct evaluation.
    """
    tgt_range = float(rec.outputs.max() - rec.outputs.min())
    if tgt_range <= 0.0:
        warnings.warn(f"{rec.id}: constant output, excluded from training")
        return None
    n = rec.n_samples
    if rec.mode == "tension":
        lam_all = rec.inputs
        collapse = 0 < curve_nodes < n
        lam = (_cheb_nodes(lam_all.min(), lam_all.max(), curve_nodes)
               if collapse else lam_all)
        i1 = lam * lam + 2.0 / lam
        i2 = 2.0 * lam + 1.0 / (lam * lam)
        I = np.column_stack([i1, i2])
        Idot = np.column_stack([
            2.0 * (lam * lam - 1.0 / lam),
            2.0 * (lam - 1.0 / (lam * lam)),
        ])
        emit = _barycentric_matrix(lam, lam_all) if collapse else None
    else:
        L, R = rec.geometry
        phi = rec.inputs * DEG2RAD
        r, w = gauss_legendre(quad_order, 0.0, R)
        shear = np.multiply.outer(phi, r) / L          # (n_t, q)
        val = 3.0 + shear * shear
        coef = 2.0 * np.multiply.outer(phi / L, r)     # sigma_ztheta = coef*(p1+p2)
        fold = 2.0 * np.pi * w * r * r
        if 0 < curve_nodes < n * quad_order:
            # interpolate g(s) = dpsi/dI1 + dpsi/dI2 at I1 = I2 = s; the
            # quadrature and the shear-stress coefficient are folded into the
            # emit matrix so the sqrt(s - 3) factor never gets interpolated
            s_nodes = _cheb_nodes(3.0, float(val.max()), curve_nodes)
            I = np.column_stack([s_nodes, s_nodes])
            Idot = np.ones((curve_nodes, 2))
            emit = np.zeros((n, curve_nodes))
            for t in range(n):
                bary = _barycentric_matrix(s_nodes, val[t])   # (q, m)
                emit[t] = (coef[t] * fold) @ bary
        else:
            I = np.column_stack([val.ravel(), val.ravel()])
            Idot = np.column_stack([coef.ravel(), coef.ravel()])
            emit = np.kron(np.eye(n), fold)  # block-diagonal quadrature fold
    return _CompiledExp(
        rec=rec, mode=rec.mode, c=rec.c, n_times=n,
        I=np.ascontiguousarray(I), Idot=np.ascontiguousarray(Idot),
        emit=emit, target=rec.outputs.copy(), inv_range=1.0 / tgt_range,
        A_relax=relaxation_matrix(rec.times, tau),
        train_idx=train_idx, val_idx=val_idx,
    )


# -- trace ----------------------------------------------------------------


@dataclass
class TraceRow:
    epoch: int
    stage: int
    train_loss: float
    val_loss: float
    l0_loss: float
    fc_active: int
    nc_active: int
    ncfc_active: int


@dataclass
class TrainingTrace:
    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        lines = ["# schema=1",
                 "epoch,stage,train_loss,val_loss,l0_loss,fc_active,nc_active,ncfc_active"]
        for r in self.rows:
            lines.append(
                f"{r.epoch},{r.stage},{float(r.train_loss)!r},{float(r.val_loss)!r},"
                f"{float(r.l0_loss)!r},{r.fc_active},{r.nc_active},{r.ncfc_active}"
            )
        atomic_write_text(path, "\n".join(lines) + "\n")


# -- the trainer ----------------------------------------------------------


class _Trainer:
    def __init__(self, records, schedule: TrainingSchedule, seed: int,
                 model: PicnnModel | None, qlv: QlvModel | None,
                 threads: int = 1, quad_order: int = 16,
                 curve_nodes: int = 48):
        self.schedule = schedule
        self.seed = int(seed)
        self.threads = max(1, int(threads))
        self.model = model if model is not None else PicnnModel().initialize(seed)
        if qlv is None:
            qlv = QlvModel(gamma_mlp=GammaMlp.initialize(seed=seed + 1))
        if qlv.gamma_mlp is None:
            raise ConfigError("training requires a gamma MLP in the QLV model")
        self.qlv = qlv
        train_map, val_map = split_train_validation(
            records, schedule.split_fraction, seed
        )
        self.exps: list[_CompiledExp] = []
        for rec in records:
            if rec.role != "train":
                continue
            exp = _compile_experiment(rec, qlv.tau, train_map[rec.id],
                                      val_map[rec.id], quad_order, curve_nodes)
            if exp is not None:
                self.exps.append(exp)
        tension = [e for e in self.exps if e.mode == "tension"]
        torsion = [e for e in self.exps if e.mode == "torsion"]
        if tension:
            fastest = max(e.rec.rate for e in tension)
            self.tension_fastest = [e for e in tension if e.rec.rate == fastest]
        else:
            self.tension_fastest = []
        self.tension_all = tension
        if torsion:
            top_rate = max(e.rec.rate for e in torsion)
            torsion = [e for e in torsion if e.rec.rate == top_rate]
        self.torsion = torsion
        self.trace = TrainingTrace()
        self.global_epoch = 0
        self.adam_picnn = AdamState(lr=schedule.lr_picnn)
        self.adam_gamma = AdamState(lr=schedule.lr_gamma)
        self.pool = (ThreadPoolExecutor(max_workers=self.threads)
                     if self.threads > 1 else None)

    # data selection ------------------------------------------------------

    def _active(self, spec: StageSpec):
        if spec.data == "tension-fastest":
            return list(self.tension_fastest)
        if spec.data == "tension-all":
            return list(self.tension_all)
        return list(self.tension_all) + list(self.torsion)

    def _validate_stages(self, visits):
        for spec in visits:
            if spec.epochs > 0 and not self._active(spec):
                raise ConfigError(
                    f"stage {spec.index} has no data (subset {spec.data!r})"
                )

    # forward/backward for one experiment ---------------------------------

    def _exp_forward(self, exp, conv_w, Cs_by_c, use_qlv, gamma_by_c):
        A, B, U, wx, wc, wI = conv_w
        Cs, Cout = Cs_by_c[exp.c]
        _, h, cache = kernel().conv_dual(A, B, U, wx, wc, wI,
                                         exp.I, exp.Idot, Cs, Cout)
        inst = exp.emit @ h if exp.emit is not None else h
        if use_qlv:
            relaxed_part = exp.A_relax @ inst
            pred = inst - gamma_by_c[exp.c] * relaxed_part
        else:
            relaxed_part = None
            pred = inst
        return pred, inst, relaxed_part, cache

    def _exp_backward(self, exp, conv_w, Cs_by_c, cache, pred_bar,
                      use_qlv, gamma_by_c):
        A, B, U, wx, wc, wI = conv_w
        Cs, Cout = Cs_by_c[exp.c]
        if use_qlv:
            inst_bar = pred_bar - gamma_by_c[exp.c] * (exp.A_relax.T @ pred_bar)
        else:
            inst_bar = pred_bar
        h_bar = exp.emit.T @ inst_bar if exp.emit is not None else inst_bar
        return kernel().conv_backward(A, B, U, wx, wc, wI, exp.I, exp.Idot,
                                      Cs, Cout, cache, h_bar=h_bar)

    # one optimizer step ----------------------------------------------------

    def _realization_grads(self, spec, active, weights_l, batch_index,
                           perms, z, dz, train_picnn, train_gamma):
        """Data loss and parameter gradients for one gate realization."""
        sched = self.schedule
        eff = effective_weights(self.model, z)
        conv_w = _conv_weight_views(self.model, eff)

        comps = sorted({e.c for e in active})
        Cs_by_c, nc_cache_by_c = {}, {}
        for c in comps:
            _, Cs, Cout, ncc = nc_forward(self.model, eff, c)
            Cs_by_c[c] = (Cs, Cout)
            nc_cache_by_c[c] = ncc
        gamma_by_c = {c: self.qlv.gamma(c) for c in comps}

        n_mode = {"tension": sum(e.mode == "tension" for e in active),
                  "torsion": sum(e.mode == "torsion" for e in active)}
        mode_alpha = {"tension": weights_l.alpha_tension,
                      "torsion": weights_l.alpha_torsion}

        def run_exp(exp):
            pred, inst, relaxed_part, cache = self._exp_forward(
                exp, conv_w, Cs_by_c, spec.use_qlv, gamma_by_c)
            bs = (sched.batch_tension if exp.mode == "tension"
                  else sched.batch_torsion)
            perm = perms[exp.rec.id]
            idx = perm[batch_index * bs:(batch_index + 1) * bs]
            if idx.size == 0:
                idx = perm[:bs]
            scale = mode_alpha[exp.mode] / n_mode[exp.mode]
            r = (pred[idx] - exp.target[idx]) * exp.inv_range
            denom = idx.size if sched.loss_reduction == "mean" else 1
            loss = scale * float(r @ r) / denom
            pred_bar = np.zeros_like(pred)
            pred_bar[idx] = 2.0 * scale * r * exp.inv_range / denom
            gamma_bar = (-float(pred_bar @ relaxed_part)
                         if spec.use_qlv else 0.0)
            grads = None
            if train_picnn:
                grads = self._exp_backward(exp, conv_w, Cs_by_c, cache,
                                           pred_bar, spec.use_qlv, gamma_by_c)
            return exp, loss, grads, gamma_bar

        if self.pool is not None:
            results = list(self.pool.map(run_exp, active))
        else:
            results = [run_exp(e) for e in active]

        # reduce in fixed experiment order for bit reproducibility
        total_loss = 0.0
        conv_tot = None
        gC_by_c = {c: ([np.zeros_like(x) for x in Cs_by_c[c][0]],
                       np.zeros_like(Cs_by_c[c][1])) for c in comps}
        gamma_bar_by_c = {c: 0.0 for c in comps}
        for exp, loss, grads, gbar in results:
            total_loss += loss
            gamma_bar_by_c[exp.c] += gbar
            if grads is None:
                continue
            if conv_tot is None:
                conv_tot = {k: [g.copy() for g in grads[k]] for k in ("A", "B", "U")}
                conv_tot["wx"] = grads["wx"].copy()
                conv_tot["wc"] = grads["wc"].copy()
                conv_tot["wI"] = grads["wI"].copy()
            else:
                for k in ("A", "B", "U"):
                    for acc, g in zip(conv_tot[k], grads[k]):
                        acc += g
                conv_tot["wx"] += grads["wx"]
                conv_tot["wc"] += grads["wc"]
                conv_tot["wI"] += grads["wI"]
            gCs, gCout = gC_by_c[exp.c]
            for acc, g in zip(gCs, grads["C"]):
                acc += g
            gCout += grads["Cout"]

        picnn_grads = None
        if train_picnn and conv_tot is not None:
            nc_tot = None
            for c in comps:
                gCs, gCout = gC_by_c[c]
                g = nc_backward(self.model, eff, c, nc_cache_by_c[c], gCs, gCout)
                if nc_tot is None:
                    nc_tot = g
                else:
                    for k in g:
                        nc_tot[k] += g[k]
            eff_grads = effective_grad_map(self.model, conv_tot, nc_tot)
            picnn_grads = {}
            for m in self.model.matrices:
                ge = eff_grads[m.name]
                picnn_grads[f"{m.name}.theta"] = ge * z[m.name]
                picnn_grads[f"{m.name}.alpha"] = ge * m.theta_bar * dz[m.name]

        gamma_grads = None
        if train_gamma:
            mlp = self.qlv.gamma_mlp
            gh_tot = np.zeros_like(mlp.w_hidden)
            go_tot = np.zeros_like(mlp.w_out)
            for c in comps:
                gbar = gamma_bar_by_c[c]
                if gbar == 0.0:
                    continue
                _, d_hid, d_out = gamma_mlp_gradients(c, mlp)
                gh_tot += gbar * d_hid
                go_tot += gbar * d_out
            gamma_grads = {"gamma.hidden": gh_tot, "gamma.out": go_tot}

        return total_loss, picnn_grads, gamma_grads

    def _step(self, spec, active, weights_l, batch_index, gates_rng, perms):
        train_picnn = spec.trainable in ("picnn", "both")
        train_gamma = spec.trainable in ("gamma", "both") and spec.use_qlv
        draws = self.model.hyper.mc_samples if spec.stochastic_gates else 1

        total_loss = 0.0
        picnn_acc = None
        gamma_acc = None
        for _ in range(draws):
            if spec.stochastic_gates:
                noise = sample_gate_noise(self.model, gates_rng)
                z, dz = sample_gates_with_derivative(self.model, noise)
            else:
                z, dz = deterministic_gates_with_derivative(self.model)
            loss, pg, gg = self._realization_grads(
                spec, active, weights_l, batch_index, perms, z, dz,
                train_picnn, train_gamma)
            total_loss += loss / draws
            if pg is not None:
                if picnn_acc is None:
                    picnn_acc = {k: v / draws for k, v in pg.items()}
                else:
                    for k, v in pg.items():
                        picnn_acc[k] += v / draws
            if gg is not None:
                if gamma_acc is None:
                    gamma_acc = {k: v / draws for k, v in gg.items()}
                else:
                    for k, v in gg.items():
                        gamma_acc[k] += v / draws

        if picnn_acc is not None:
            # the expected-L0 penalty gradient is deterministic in log_alpha
            shift = self.model.hyper.beta * math.log(
                -self.model.hyper.gamma_gate / self.model.hyper.zeta)
            group_alpha = {"fc": weights_l.alpha_fc, "nc": weights_l.alpha_nc,
                           "ncfc": weights_l.alpha_ncfc}
            params = {}
            for m in self.model.matrices:
                params[f"{m.name}.theta"] = m.theta_bar
                params[f"{m.name}.alpha"] = m.log_alpha
                a = group_alpha[m.group]
                if a > 0.0:
                    s = sigmoid(m.log_alpha - shift)
                    picnn_acc[f"{m.name}.alpha"] = (
                        picnn_acc[f"{m.name}.alpha"] + a * s * (1.0 - s))
            adam_step(params, picnn_acc, self.adam_picnn)
            project_nonnegative(self.model)

        if gamma_acc is not None:
            mlp = self.qlv.gamma_mlp
            adam_step({"gamma.hidden": mlp.w_hidden, "gamma.out": mlp.w_out},
                      gamma_acc, self.adam_gamma)

        l0 = expected_l0_by_group(self.model)
        l0_term = (weights_l.alpha_fc * l0["fc"] + weights_l.alpha_nc * l0["nc"]
                   + weights_l.alpha_ncfc * l0["ncfc"])
        return total_loss, l0_term

    # evaluation with deterministic gates ----------------------------------

    def _eval_loss(self, active, use_qlv, weights_l, which: str) -> float:
        z = inference_gates(self.model)
        eff = effective_weights(self.model, z)
        conv_w = _conv_weight_views(self.model, eff)
        comps = sorted({e.c for e in active})
        Cs_by_c = {}
        for c in comps:
            _, Cs, Cout, _ = nc_forward(self.model, eff, c)
            Cs_by_c[c] = (Cs, Cout)
        gamma_by_c = {c: self.qlv.gamma(c) for c in comps}
        n_mode = {"tension": sum(e.mode == "tension" for e in active),
                  "torsion": sum(e.mode == "torsion" for e in active)}
        mode_alpha = {"tension": weights_l.alpha_tension,
                      "torsion": weights_l.alpha_torsion}
        total = 0.0
        for exp in active:
            pred, _, _, _ = self._exp_forward(exp, conv_w, Cs_by_c,
                                              use_qlv, gamma_by_c)
            if which == "val":
                idx = exp.val_idx
            elif which == "train":
                idx = exp.train_idx
            else:
                idx = np.arange(exp.n_times)
            if idx.size == 0:
                continue
            r = (pred[idx] - exp.target[idx]) * exp.inv_range
            denom = idx.size if self.schedule.loss_reduction == "mean" else 1
            total += mode_alpha[exp.mode] / n_mode[exp.mode] * float(r @ r) / denom
        return total

    # stage loop ------------------------------------------------------------

    def _run_stage(self, spec: StageSpec):
        sched = self.schedule
        active = self._active(spec)
        for e in range(spec.epochs):
            frac = (e + 1) / spec.epochs
            weights_l = LossWeights(
                alpha_tension=sched.alpha_tension,
                alpha_torsion=(
                    sched.alpha_torsion_target * frac if spec.ramp_torsion
                    else (sched.alpha_torsion_target if spec.index >= 7 else 0.0)
                ),
                alpha_fc=sched.alpha_fc_target * frac if spec.ramp_sparsity else 0.0,
                alpha_nc=sched.alpha_nc_target * frac if spec.ramp_sparsity else 0.0,
                alpha_ncfc=sched.alpha_ncfc_target * frac if spec.ramp_sparsity else 0.0,
            )
            # one generator per purpose per epoch; batches then take disjoint
            # slices of a single per-epoch permutation of each experiment
            gates_rng = _stable_key(self.seed, "gates", self.global_epoch)
            perm_rng = _stable_key(self.seed, "perm", self.global_epoch)
            perms = {exp.rec.id: perm_rng.permutation(exp.train_idx)
                     for exp in active}
            step_losses = []
            l0_term = 0.0
            for b in range(sched.batches_per_experiment):
                loss, l0_term = self._step(spec, active, weights_l, b,
                                           gates_rng, perms)
                step_losses.append(loss)
            val = self._eval_loss(active, spec.use_qlv, weights_l, "val")
            counts = count_active_parameters(self.model)
            self.trace.rows.append(TraceRow(
                epoch=self.global_epoch, stage=spec.index,
                train_loss=float(np.mean(step_losses)), val_loss=val,
                l0_loss=l0_term, fc_active=counts.fc, nc_active=counts.nc,
                ncfc_active=counts.ncfc,
            ))
            self.global_epoch += 1

    def run(self, checkpoint_cb=None):
        sched = self.schedule
        ep = sched.stage_epochs
        stage1 = StageSpec(1, ep[0], "picnn", "tension-fastest", use_qlv=False)
        cycle_a = [
            StageSpec(2, ep[1], "gamma", "tension-all", use_qlv=True),
            StageSpec(3, ep[2], "picnn", "tension-fastest", use_qlv=True),
        ]
        cycle_b = [
            StageSpec(4, ep[3], "gamma", "tension-all", use_qlv=True),
            StageSpec(5, ep[4], "picnn", "tension-fastest", use_qlv=True),
        ]
        # relaxation parameters are fitted on tension only (torsion sits in
        # the quasi-static regime), so stages 6-7 update the potential alone
        stage6 = StageSpec(6, ep[5], "picnn", "all", use_qlv=True, ramp_torsion=True)
        stage7 = StageSpec(7, ep[6], "picnn", "all", use_qlv=True,
                           ramp_sparsity=True,
                           stochastic_gates=sched.sampled_gates_stage7)
        self._validate_stages([stage1, *cycle_a, *cycle_b, stage6, stage7])

        self._run_stage(stage1)
        if checkpoint_cb:
            checkpoint_cb(1, self.model, self.qlv)

        # alternation: cycle 1 = stages 2+3, cycle 2 = stages 4+5, further
        # cycles reuse the stage 4/5 budgets; stop when both the tension loss
        # and the relaxation coefficients have settled over a full cycle
        cycles = [cycle_a, cycle_b]
        while len(cycles) < sched.max_alternation_cycles:
            cycles.append(cycle_b)
        prev = None
        prev_gamma = None
        comps = sorted({e.c for e in self.tension_all})
        for i, cyc in enumerate(cycles):
            if all(s.epochs == 0 for s in cyc):
                break
            for spec in cyc:
                self._run_stage(spec)
            if checkpoint_cb:
                checkpoint_cb(spec.index, self.model, self.qlv)
            if not self.tension_all:
                break
            cur = self._eval_loss(self.tension_all, True, LossWeights(), "all")
            cur_gamma = np.array([self.qlv.gamma(c) for c in comps])
            if prev is not None and i >= 1:
                loss_settled = (prev - cur
                                < sched.alternation_rel_tol * max(prev, 1e-30))
                gamma_settled = np.max(np.abs(cur_gamma - prev_gamma)) < 0.01
                if loss_settled and gamma_settled:
                    break
            prev = cur
            prev_gamma = cur_gamma

        self._run_stage(stage6)
        if checkpoint_cb:
            checkpoint_cb(6, self.model, self.qlv)
        self._run_stage(stage7)
        if checkpoint_cb:
            checkpoint_cb(7, self.model, self.qlv)
        if self.pool is not None:
            self.pool.shutdown()
        return self.model, self.qlv, self.trace


def run_schedule(data, schedule: TrainingSchedule | None = None, seed: int = 0,
                 model: PicnnModel | None = None, qlv: QlvModel | None = None,
                 threads: int = 1, quad_order: int = 16, curve_nodes: int = 48,
                 checkpoint_cb=None):
    """Run the full staged plan on the train-role records.

    Returns (model, qlv, trace).  ``checkpoint_cb(stage_index, model, qlv)``
    fires at stage boundaries when provided.  ``curve_nodes`` controls the
    Chebyshev collapse of the per-experiment evaluation (0 disables it).
    """
    schedule = schedule or TrainingSchedule.paper_defaults()
    trainer = _Trainer(data, schedule, seed, model, qlv, threads=threads,
                       quad_order=quad_order, curve_nodes=curve_nodes)
    return trainer.run(checkpoint_cb)
