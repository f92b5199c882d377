"""Command-line entry points: train, infer, cost, explore.

Standard output carries only data; all diagnostics go to standard error.
Exit codes: 0 success, 1 training stopped without converging, 2 usage or
configuration error, 3 divergence, 4 corrupt model file, 5 dimension or
divisibility error, 6 infeasible capacity.
"""

import argparse
import json
import sys
from dataclasses import fields, replace

import numpy as np

from .admm import (
    TrainConfig,
    admm_train,
    dense_from_trained,
    evaluate_model,
    make_eval_set,
    recurrent_outputs,
    sgd_train,
    to_inference,
    trace_lines,
)
from .cells import run_sequence
from .cost import (
    DEFAULT_RESERVE,
    LayerSpec,
    cost_report,
    phase1_explore,
)
from .errors import (
    DimensionMismatchError,
    DivergenceError,
    InfeasibleCapacityError,
    ModelFileError,
    PartitionError,
)
from .modelfile import read_model, write_model
from .quantize import calibrate_formats, quantized_inference
from .tasks import make_task

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_CORRUPT_MODEL = 4
EXIT_DIMENSION = 5
EXIT_INFEASIBLE = 6


def _err(message):
    print(f"error: {message}", file=sys.stderr)


def _info(message):
    print(message, file=sys.stderr)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(_usage(f"cannot read config {path}: {exc}"))


def _usage(message):
    _err(message)
    return EXIT_USAGE


def _padded_input_dim(raw, recurrent, block, io_block=None):
    """Smallest input width compatible with the block partitioning."""
    x = raw
    while True:
        ok = (x + recurrent) % block == 0
        if io_block is not None:
            ok = ok and x % io_block == 0
        if ok:
            return x
        x += 1


def _resolve_task_and_config(doc, seed_override=None):
    doc = dict(doc)
    task_name = doc.pop("task", "copy")
    task_options = doc.pop("task_options", {})
    quantize_bits = doc.pop("quantize_bits", 12)
    explicit_input = doc.pop("input_dim", None)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(doc) - known
    if unknown:
        raise SystemExit(_usage(f"unknown config keys: {sorted(unknown)}"))
    cfg = TrainConfig(**doc)
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    probe = make_task(task_name, **task_options)
    recurrent = cfg.projection if (cfg.cell == "lstm" and cfg.projection) else cfg.hidden
    input_dim = explicit_input if explicit_input is not None else _padded_input_dim(
        probe.input_dim, recurrent, cfg.block_size, cfg.io_block_size
    )
    task = make_task(task_name, input_dim=input_dim, **task_options)
    return task, cfg, quantize_bits


def cmd_train(args):
    task, cfg, quantize_bits = _resolve_task_and_config(_load_json(args.config),
                                                        args.seed)
    try:
        result = admm_train(task, cfg)
    except DivergenceError as exc:
        _err(f"training diverged: {exc} (last objective {exc.last_objective})")
        return EXIT_DIVERGED
    except PartitionError as exc:
        return _usage(str(exc))
    model = to_inference(result.model, cfg)
    if quantize_bits:
        calib = [xs[0] for xs, _ in make_eval_set(task, cfg, 4)]
        model.quantization = calibrate_formats(model.cell, calib, quantize_bits)
    write_model(args.output, model)
    trace_path = args.trace or (args.output + ".trace")
    with open(trace_path, "w") as fh:
        fh.write("\n".join(trace_lines(result.trace)) + "\n")
    _info(f"converged={result.converged} iterations={len(result.trace)} "
          f"eval_loss={result.eval_loss:.6f} eval_metric={result.eval_metric:.6f}")
    _info(f"model written to {args.output}, trace to {trace_path}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _load_inputs(path, input_dim):
    try:
        data = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise SystemExit(_usage(f"cannot read inputs {path}: {exc}"))
    if data.shape[1] != input_dim:
        _err(f"input vectors have dimension {data.shape[1]}, model expects {input_dim}")
        raise SystemExit(EXIT_DIMENSION)
    return data


def cmd_infer(args):
    try:
        model = read_model(args.model)
    except OSError as exc:
        return _usage(f"cannot read model {args.model}: {exc}")
    except ModelFileError as exc:
        _err(str(exc))
        return EXIT_CORRUPT_MODEL
    xs = _load_inputs(args.inputs, model.cell.input_dim)

    if args.quantized:
        if model.quantization is None:
            return _usage("model file has no quantization section")
        outputs_list, report = quantized_inference(model.cell, model.quantization, [xs])
        outputs = outputs_list[0]
        for line in report.lines():
            _info(line)
    else:
        outputs = run_sequence(model.cell, xs)

    if args.compare_dense:
        dense = dense_from_trained(model)
        _, cache = dense.forward(xs[None, :, :])
        reference = recurrent_outputs(cache)[0]
        float_outputs = run_sequence(model.cell, xs)
        deviation = float(np.abs(float_outputs - reference).max())
        _info(f"max_deviation_vs_dense {deviation!r}")

    for row in outputs:
        print(" ".join(repr(float(v)) for v in row))
    return EXIT_OK


def _parse_capacity(text):
    units = {"kib": 2**10, "mib": 2**20, "gib": 2**30,
             "kb": 10**3, "mb": 10**6, "gb": 10**9, "b": 1}
    t = text.strip().lower()
    for suffix in sorted(units, key=len, reverse=True):
        if t.endswith(suffix):
            return int(float(t[: -len(suffix)]) * units[suffix])
    return int(t)


def cmd_cost(args):
    layers = tuple(int(v) for v in args.layers.split(","))
    spec = LayerSpec(args.cell, layers, args.input, args.proj, args.block,
                     args.io_block)
    capacity = _parse_capacity(args.capacity) if args.capacity else None
    pe_inputs = None
    if args.dsp_per_pe and args.lut_per_pe:
        pe_inputs = (args.dsp, args.lut, args.dsp_per_pe, args.lut_per_pe)
    report = cost_report(spec, args.bits, capacity, args.reserve, pe_inputs)
    if args.json:
        print(report.to_json())
    else:
        print("\n".join(report.lines()))
    return EXIT_OK


def cmd_explore(args):
    doc = _load_json(args.config)
    capacity = doc.pop("capacity_bytes", None)
    if capacity is None:
        return _usage("explore config needs capacity_bytes")
    tolerance = doc.pop("tolerance", 0.01)
    bits = doc.pop("bits", 12)
    reserve = doc.pop("reserve", DEFAULT_RESERVE)
    upper_bound = doc.pop("upper_bound", 64)
    task, cfg, _ = _resolve_task_and_config({**doc, "quantize_bits": 0}, args.seed)

    _info("training the unconstrained baseline for the reference metric")
    baseline_model = sgd_train(task, cfg)
    eval_set = make_eval_set(task, cfg)
    _, baseline_metric = evaluate_model(baseline_model, task, eval_set)
    _info(f"baseline metric {baseline_metric:.6f}")

    def oracle(spec: LayerSpec):
        oracle_cfg = replace(
            cfg,
            cell=spec.cell,
            hidden=spec.layer_sizes[0],
            projection=spec.projection,
            block_size=spec.block_size,
            io_block_size=None if spec.io_block_size == spec.block_size
            else spec.io_block_size,
        )
        result = admm_train(task, oracle_cfg)
        _info(f"oracle: cell={spec.cell} block={spec.block_size} "
              f"io={spec.effective_io_block} -> metric {result.eval_metric:.6f}")
        return result.eval_metric

    base_spec = LayerSpec("lstm", (cfg.hidden,), task.input_dim, cfg.projection, 1)
    try:
        result = phase1_explore(base_spec, oracle, capacity, tolerance,
                                baseline_metric, bits_per_weight=bits,
                                reserve_fraction=reserve, upper_bound=upper_bound)
    except InfeasibleCapacityError as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE

    lines = []
    lines.append(f"chosen cell={result.chosen.cell} block={result.chosen.block_size} "
                 f"io_block={result.chosen.effective_io_block} "
                 f"layers={'-'.join(str(h) for h in result.chosen.layer_sizes)}")
    lines.append(f"baseline_metric {baseline_metric!r}")
    lines.append(f"bounds [{result.lower_bound}, {result.upper_bound}]")
    lines.append(f"constraint_violated {result.constraint_violated}")
    lines.append(f"oracle_calls {len(result.calls)}")
    lines.extend(result.log)
    text = "\n".join(lines)
    print(text)
    if args.log:
        with open(args.log, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bcrnn",
        description="Block-circulant RNN toolkit: structured training, "
                    "FFT inference, quantization, and cost exploration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="ADMM-train a model on a synthetic task")
    p.add_argument("config", help="JSON training configuration")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument("--trace", help="convergence trace path (default OUTPUT.trace)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a model over an input sequence")
    p.add_argument("model", help="model file")
    p.add_argument("inputs", help="text file, one input vector per line")
    p.add_argument("--quantized", action="store_true",
                   help="use the embedded quantization section")
    p.add_argument("--compare-dense", action="store_true",
                   help="report max deviation vs the dense-expansion reference")
    p.add_argument("--seed", type=int, help="accepted for interface uniformity")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("cost", help="analytical cost report and block-size sweep")
    p.add_argument("--cell", choices=("lstm", "gru"), default="lstm")
    p.add_argument("--layers", default="1024,1024", help="comma-separated layer sizes")
    p.add_argument("--input", type=int, default=160, help="input feature dimension")
    p.add_argument("--proj", type=int, default=None, help="LSTM projection dimension")
    p.add_argument("--block", type=int, default=8, help="block size")
    p.add_argument("--io-block", type=int, default=None,
                   help="larger block size for input-side matrices")
    p.add_argument("--bits", type=int, default=12, help="weight bit width")
    p.add_argument("--capacity", help="BRAM capacity (e.g. 4MiB)")
    p.add_argument("--reserve", type=float, default=DEFAULT_RESERVE,
                   help="capacity fraction reserved for I/O buffers")
    p.add_argument("--dsp", type=int, default=3600, help="total DSP slices")
    p.add_argument("--lut", type=int, default=859200, help="total LUTs")
    p.add_argument("--dsp-per-pe", type=int, default=None)
    p.add_argument("--lut-per-pe", type=int, default=None)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--seed", type=int, help="accepted for interface uniformity")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("explore", help="three-step design-space exploration")
    p.add_argument("config", help="JSON exploration configuration")
    p.add_argument("--log", help="also write the rationale log to this path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_explore)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ModelFileError as exc:
        _err(str(exc))
        code = EXIT_CORRUPT_MODEL
    except (DimensionMismatchError, PartitionError) as exc:
        _err(str(exc))
        code = EXIT_DIMENSION
    except InfeasibleCapacityError as exc:
        _err(str(exc))
        code = EXIT_INFEASIBLE
    except DivergenceError as exc:
        _err(str(exc))
        code = EXIT_DIVERGED
    return code


if __name__ == "__main__":
    sys.exit(main())
