"""ADMM training that drives dense RNN weights to block-circulant form.

Each iteration alternates three updates. Subproblem 1 runs SGD on the task
loss plus quadratic penalties (rho/2)||W - Z + U||_F^2, one per constrained
matrix. Subproblem 2 is exact: Z becomes the Euclidean projection of W + U
onto the block-circulant subspace (per-diagonal averaging). The dual then
accumulates U += W - Z. Convergence is declared when every relative
residual ||W - Z||_F / ||W||_F drops below the tolerance; the returned
weights are the Z side, which is exactly structured by construction.

Constraints address whole matrices or column ranges of one, so the fused
gate matrix can carry a larger block size on its input columns than on its
recurrent columns (fine-tuning). Biases and peephole diagonals are vectors
and stay unconstrained.
"""

import math
from dataclasses import dataclass

import numpy as np

from .bptt import DenseGRU, DenseLSTM
from .cells import GRUParams, LSTMParams
from .circulant import expand_to_dense, generators_from_structured, project_to_block_circulant
from .errors import DivergenceError, PartitionError

EVAL_BATCHES = 8
EVAL_SEED_OFFSET = 0x5EED
# rho stops growing once lr * rho reaches this bound: keeps the quadratic
# term inside plain SGD's stability region.
RHO_LR_STABILITY_CAP = 0.5


@dataclass(frozen=True)
class TrainConfig:
    cell: str = "lstm"
    hidden: int = 16
    projection: int | None = None
    gate_activation: str = "sigmoid"
    block_size: int = 4
    io_block_size: int | None = None  # larger blocks on input columns (fine tuning)
    learning_rate: float = 0.5
    lr_decay: float = 1.0  # multiplier applied after each ADMM iteration
    momentum: float = 0.9
    epochs_per_iteration: int = 2
    batches_per_epoch: int = 25
    batch_size: int = 32
    max_iterations: int = 50
    tolerance: float = 1e-3
    rho: float = 5e-3
    rho_growth: float = 1.0
    pretrain_epochs: int = 0  # plain-SGD epochs before the first iteration
    finetune_epochs: int = 0  # in-subspace epochs after the structured weights land
    seed: int = 0
    init_scale: float | None = None

    def __post_init__(self):
        if self.tolerance <= 0 or self.learning_rate <= 0 or self.max_iterations < 1:
            raise ValueError("learning_rate, tolerance and max_iterations must be positive")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")


@dataclass(frozen=True)
class LayerConstraint:
    """One block-circulant constraint on a matrix or a column range of it."""

    name: str
    param: str
    block_size: int
    cols: slice | None = None


@dataclass
class ADMMState:
    constraints: list
    Z: dict
    U: dict
    rho: dict
    iteration: int = 0


@dataclass
class IterationRecord:
    k: int
    objective: float
    task_loss: float
    residuals: dict
    rho: float


@dataclass
class TrainedModel:
    """Inference-side view of a trained network: structured cell + head."""

    cell: object  # LSTMParams or GRUParams
    head_w: np.ndarray
    head_b: np.ndarray
    quantization: dict | None = None


@dataclass
class ADMMResult:
    model: object
    state: ADMMState
    trace: list
    converged: bool
    config: TrainConfig
    eval_loss: float
    eval_metric: float


def build_model(task, cfg: TrainConfig, rng):
    if cfg.cell == "lstm":
        return DenseLSTM(task.input_dim, cfg.hidden, task.output_classes,
                         projection_dim=cfg.projection,
                         gate_activation=cfg.gate_activation,
                         rng=rng, init_scale=cfg.init_scale)
    if cfg.cell == "gru":
        return DenseGRU(task.input_dim, cfg.hidden, task.output_classes,
                        rng=rng, init_scale=cfg.init_scale)
    raise ValueError(f"unknown cell {cfg.cell!r}; choices: lstm, gru")


def default_constraints(model, cfg: TrainConfig):
    """Block-circulant constraints for every weight matrix of the cell.

    With io_block_size set, input columns of the fused matrix (and the
    GRU's candidate input matrix) take the larger block; everything else
    stays at block_size. At most two distinct sizes model-wide.
    """
    X = model.input_dim
    io = cfg.io_block_size
    out = []
    if io is None or io == cfg.block_size:
        for name in model.constrained_matrix_names():
            out.append(LayerConstraint(name, name, cfg.block_size))
    else:
        out.append(LayerConstraint("W:in", "W", io, cols=slice(0, X)))
        out.append(LayerConstraint("W:rec", "W", cfg.block_size, cols=slice(X, None)))
        for name in model.constrained_matrix_names():
            if name == "W":
                continue
            block = io if name == "Wcx" else cfg.block_size
            out.append(LayerConstraint(name, name, block, cols=None))
    for con in out:
        sub = constrained_view(model, con)
        if sub.shape[0] % con.block_size or sub.shape[1] % con.block_size:
            raise PartitionError(
                f"constraint {con.name}: block size {con.block_size} does not "
                f"divide shape {sub.shape}"
            )
    return out


def constrained_view(model, con: LayerConstraint):
    W = model.params[con.param]
    return W if con.cols is None else W[:, con.cols]


def assign_constrained(model, con: LayerConstraint, value):
    if con.cols is None:
        model.params[con.param] = value.copy()
    else:
        model.params[con.param][:, con.cols] = value


def init_admm_state(model, constraints, rho) -> ADMMState:
    Z, U, rhos = {}, {}, {}
    for con in constraints:
        W = constrained_view(model, con)
        Z[con.name] = expand_to_dense(project_to_block_circulant(W, con.block_size))
        U[con.name] = np.zeros_like(W)
        rhos[con.name] = rho
    return ADMMState(list(constraints), Z, U, rhos)


def penalty_value(model, state: ADMMState):
    total = 0.0
    for con in state.constraints:
        diff = constrained_view(model, con) - state.Z[con.name] + state.U[con.name]
        total += 0.5 * state.rho[con.name] * float(np.sum(diff * diff))
    return total


def task_objective_and_grads(model, task, xs, targets, state: ADMMState | None):
    """Full subproblem-1 objective (task loss + penalties) and its gradients."""
    logits, cache = model.forward(xs)
    loss, dlogits = task.loss_grad(logits, targets)
    grads = model.backward(cache, dlogits)
    objective = loss
    if state is not None:
        objective += penalty_value(model, state)
        for con in state.constraints:
            diff = constrained_view(model, con) - state.Z[con.name] + state.U[con.name]
            g = state.rho[con.name] * diff
            if con.cols is None:
                grads[con.param] = grads[con.param] + g
            else:
                grads[con.param][:, con.cols] += g
    return objective, loss, grads


def make_eval_set(task, cfg: TrainConfig, n_batches=EVAL_BATCHES):
    """Fixed held-out batches used for objectives, traces and metrics."""
    rng = np.random.default_rng(cfg.seed + EVAL_SEED_OFFSET)
    return [task.batch(rng, cfg.batch_size) for _ in range(n_batches)]


def evaluate_model(model, task, eval_set):
    losses, metrics = [], []
    for xs, targets in eval_set:
        logits, _ = model.forward(xs)
        loss, _ = task.loss_grad(logits, targets)
        losses.append(loss)
        metrics.append(task.metric(logits, targets))
    return float(np.mean(losses)), float(np.mean(metrics))


def evaluate_objective(model, task, eval_set, state: ADMMState | None):
    loss, _ = evaluate_model(model, task, eval_set)
    return loss + (penalty_value(model, state) if state is not None else 0.0)


class _SGD:
    """Plain SGD with momentum over a model's parameter dict."""

    def __init__(self, model, momentum):
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in model.params.items()}

    def step(self, model, grads, lr):
        for k, g in grads.items():
            v = self.velocity[k]
            v *= self.momentum
            v -= lr * g
            model.params[k] += v


def solve_subproblem1(model, task, state: ADMMState | None, cfg: TrainConfig,
                      rng, optimizer, lr):
    """SGD epochs on loss + quadratic penalty; returns last minibatch objective."""
    last = None
    for _ in range(cfg.epochs_per_iteration):
        for _ in range(cfg.batches_per_epoch):
            xs, targets = task.batch(rng, cfg.batch_size)
            objective, _, grads = task_objective_and_grads(model, task, xs, targets, state)
            if not math.isfinite(objective):
                raise DivergenceError("training objective became non-finite",
                                      last_objective=last)
            optimizer.step(model, grads, lr)
            last = objective
    return last


def solve_subproblem2(model, state: ADMMState):
    """Z <- Euclidean projection of W + U onto the block-circulant subspace."""
    for con in state.constraints:
        target = constrained_view(model, con) + state.U[con.name]
        state.Z[con.name] = expand_to_dense(
            project_to_block_circulant(target, con.block_size)
        )
    return state


def dual_update(model, state: ADMMState):
    """U <- U + W - Z, element-wise per constrained matrix."""
    for con in state.constraints:
        state.U[con.name] += constrained_view(model, con) - state.Z[con.name]
    return state


def residuals(model, state: ADMMState):
    out = {}
    for con in state.constraints:
        W = constrained_view(model, con)
        denom = max(float(np.linalg.norm(W)), 1e-30)
        out[con.name] = float(np.linalg.norm(W - state.Z[con.name])) / denom
    return out


def admm_train(task, cfg: TrainConfig) -> ADMMResult:
    """Full ADMM loop; final weights are the exactly-structured Z side."""
    rng = np.random.default_rng(cfg.seed)
    model = build_model(task, cfg, rng)
    constraints = default_constraints(model, cfg)
    eval_set = make_eval_set(task, cfg)
    optimizer = _SGD(model, cfg.momentum)
    lr = cfg.learning_rate
    _pretrain(model, task, cfg, rng, optimizer, lr)
    state = init_admm_state(model, constraints, cfg.rho)
    trace = []
    converged = False
    for k in range(1, cfg.max_iterations + 1):
        state.iteration = k
        solve_subproblem1(model, task, state, cfg, rng, optimizer, lr)
        solve_subproblem2(model, state)
        dual_update(model, state)
        res = residuals(model, state)
        task_loss, _ = evaluate_model(model, task, eval_set)
        objective = task_loss + penalty_value(model, state)
        if not math.isfinite(objective):
            raise DivergenceError("training objective became non-finite",
                                  last_objective=trace[-1].objective if trace else None)
        trace.append(IterationRecord(k, objective, task_loss, res,
                                     max(state.rho.values())))
        if all(r < cfg.tolerance for r in res.values()):
            converged = True
            break
        lr *= cfg.lr_decay
        for name in state.rho:
            grown = state.rho[name] * cfg.rho_growth
            if grown * lr <= RHO_LR_STABILITY_CAP:
                state.rho[name] = grown

    # install the structured Z weights; biases and head keep their SGD values
    for con in constraints:
        assign_constrained(model, con, state.Z[con.name])
    _finetune_structured(model, task, cfg, rng, lr, constraints)
    eval_loss, eval_metric = evaluate_model(model, task, eval_set)
    return ADMMResult(model, state, trace, converged, cfg, eval_loss, eval_metric)


def _project_constrained_grads(grads, constraints):
    for con in constraints:
        g = grads[con.param] if con.cols is None else grads[con.param][:, con.cols]
        gp = expand_to_dense(project_to_block_circulant(g, con.block_size))
        if con.cols is None:
            grads[con.param] = gp
        else:
            grads[con.param][:, con.cols] = gp


def _finetune_structured(model, task, cfg, rng, lr, constraints):
    """Train inside the block-circulant subspace: gradients are projected per
    constraint, so exact structure is preserved bit for bit."""
    if cfg.finetune_epochs == 0:
        return
    # a heavily decayed ADMM lr would cripple the polish phase
    lr = max(lr, 0.1 * cfg.learning_rate)
    optimizer = _SGD(model, cfg.momentum)  # fresh velocity, all in-subspace
    for _ in range(cfg.finetune_epochs):
        for _ in range(cfg.batches_per_epoch):
            xs, targets = task.batch(rng, cfg.batch_size)
            objective, _, grads = task_objective_and_grads(model, task, xs, targets, None)
            if not math.isfinite(objective):
                raise DivergenceError("training objective became non-finite")
            _project_constrained_grads(grads, constraints)
            optimizer.step(model, grads, lr)


def _pretrain(model, task, cfg, rng, optimizer, lr):
    """Plain SGD before ADMM starts: structure is imposed on a trained net."""
    for _ in range(cfg.pretrain_epochs):
        for _ in range(cfg.batches_per_epoch):
            xs, targets = task.batch(rng, cfg.batch_size)
            objective, _, grads = task_objective_and_grads(model, task, xs, targets, None)
            if not math.isfinite(objective):
                raise DivergenceError("training objective became non-finite")
            optimizer.step(model, grads, lr)


def sgd_train(task, cfg: TrainConfig):
    """Unconstrained SGD with the same total step budget as admm_train."""
    rng = np.random.default_rng(cfg.seed)
    model = build_model(task, cfg, rng)
    optimizer = _SGD(model, cfg.momentum)
    lr = cfg.learning_rate
    _pretrain(model, task, cfg, rng, optimizer, lr)
    for _ in range(cfg.max_iterations):
        solve_subproblem1(model, task, None, cfg, rng, optimizer, lr)
        lr *= cfg.lr_decay
    return model


def one_shot_project(model, cfg: TrainConfig):
    """Project a trained model's weight matrices once, without retraining."""
    projected = build_model_like(model)
    projected.params = {k: v.copy() for k, v in model.params.items()}
    for con in default_constraints(projected, cfg):
        dense = expand_to_dense(
            project_to_block_circulant(constrained_view(projected, con), con.block_size)
        )
        assign_constrained(projected, con, dense)
    return projected


def build_model_like(model):
    if isinstance(model, DenseLSTM):
        clone = DenseLSTM(model.input_dim, model.hidden_dim, model.output_classes,
                          projection_dim=model.projection_dim,
                          gate_activation=model.gate_activation)
    else:
        clone = DenseGRU(model.input_dim, model.hidden_dim, model.output_classes)
    clone.params = {k: v.copy() for k, v in model.params.items()}
    return clone


def to_inference(model, cfg: TrainConfig) -> TrainedModel:
    """Package exactly-structured weights as block-circulant cell params."""
    if cfg.io_block_size not in (None, cfg.block_size):
        raise ValueError("mixed block sizes cannot be packed into fused cell params")
    L = cfg.block_size
    p = model.params
    if isinstance(model, DenseLSTM):
        H = model.hidden_dim
        fused = generators_from_structured(p["W"], L)
        proj = generators_from_structured(p["Wp"], L) if "Wp" in p else None
        b = p["b"]
        cell = LSTMParams(fused, p["wic"], p["wfc"], p["woc"],
                          b[:H], b[H:2 * H], b[2 * H:3 * H], b[3 * H:],
                          proj, model.input_dim, model.gate_activation)
    else:
        H = model.hidden_dim
        cell = GRUParams(generators_from_structured(p["W"], L),
                         generators_from_structured(p["Wcx"], L),
                         generators_from_structured(p["Wcc"], L),
                         p["b"][:H], p["b"][H:], p["bc"], model.input_dim)
    return TrainedModel(cell, p["V"].copy(), p["bv"].copy())


def dense_from_trained(tm: TrainedModel):
    """Dense-expansion reference model for a trained block-circulant cell."""
    cell = tm.cell
    if isinstance(cell, LSTMParams):
        model = DenseLSTM(
            cell.input_dim, cell.hidden_dim, tm.head_w.shape[0],
            projection_dim=None if cell.projection is None else cell.projection.rows,
            gate_activation=cell.gate_activation,
        )
        model.params["W"] = expand_to_dense(cell.fused)
        model.params["b"] = np.concatenate([cell.b_i, cell.b_f, cell.b_c, cell.b_o])
        for name, vec in (("wic", cell.w_ic), ("wfc", cell.w_fc), ("woc", cell.w_oc)):
            model.params[name] = vec.copy()
        if cell.projection is not None:
            model.params["Wp"] = expand_to_dense(cell.projection)
    else:
        model = DenseGRU(cell.input_dim, cell.hidden_dim, tm.head_w.shape[0])
        model.params["W"] = expand_to_dense(cell.fused)
        model.params["b"] = np.concatenate([cell.b_r, cell.b_z])
        model.params["Wcx"] = expand_to_dense(cell.candidate_x)
        model.params["Wcc"] = expand_to_dense(cell.candidate_c)
        model.params["bc"] = cell.b_c.copy()
    model.params["V"] = tm.head_w.copy()
    model.params["bv"] = tm.head_b.copy()
    return model


def recurrent_outputs(cache):
    """Per-step recurrent outputs (B, T, dim) from a forward cache."""
    return np.stack([step[-1] for step in cache], axis=1)


def trace_lines(trace):
    """Line-oriented text: one record per iteration after a schema header."""
    if not trace:
        return ["# k objective task_loss rho"]
    names = sorted(trace[0].residuals)
    header = "# k objective task_loss rho " + " ".join(f"res:{n}" for n in names)
    lines = [header]
    for rec in trace:
        vals = " ".join(repr(rec.residuals[n]) for n in names)
        lines.append(f"{rec.k} {rec.objective!r} {rec.task_loss!r} {rec.rho!r} {vals}")
    return lines
