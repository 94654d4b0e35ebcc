"""Command-line front end.

Subcommands: ``train-newton``, ``train-sgd``, ``eval``, ``partition-plan``
and ``gn-check``. Settings come from a JSON config file (``--config``) and
can be overridden by flags; relative paths in a config file are resolved
against the file's directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import subprocess
import sys
import tempfile
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .collectives import Communicator, TcpTransport, free_listeners
from .collectives.transport import DEFAULT_TIMEOUT
from .data import LabelMap, Scaler, load_dataset
from .dist import NewtonHyper, Topology, make_program, newton_train
from .errors import ConfigurationError
from .metrics import evaluate
from .network import Batch, NetConfig, Theta, forward_ref
from .partition import CostModelParams, SplitStructure, balance_report, cost_estimate
from .sgd import SgdHyper, sgd_train

SCRATCH_ENV = "DISTNEWTON_SCRATCH"
CSV_HEADER = "iter,elapsed_sec,f,metric"


@dataclass
class RunConfig:
    train: str | None = None
    test: str | None = None
    n_features: int | None = None
    scaling: str = "none"
    net: list | None = None
    split: str | None = None
    init: str = "sparse"
    seed: int = 0
    metric: str = "accuracy"
    max_iter: int = 100
    transport: str = "inproc"
    endpoints: list = field(default_factory=list)
    timeout: float = DEFAULT_TIMEOUT
    processes: bool = False
    timing: str = "wall"
    out: str | None = None
    newton: dict = field(default_factory=dict)
    sgd: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls()
        path = Path(path)
        raw = json.loads(path.read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        base = path.resolve().parent
        for key in ("train", "test", "out"):
            value = getattr(cfg, key)
            if value and not Path(value).is_absolute():
                setattr(cfg, key, str(base / value))
        return cfg

    def net_config(self) -> NetConfig:
        if self.net is None:
            raise ConfigurationError("no network given (config key 'net' or --net)")
        sizes = self.net.split("-") if isinstance(self.net, str) else self.net
        return NetConfig(sizes)

    def split_structure(self, net: NetConfig) -> SplitStructure:
        split = SplitStructure.parse(self.split) if self.split else SplitStructure([1] * (net.L + 1))
        split.validate(net)
        return split

    def validate(self, net: NetConfig):
        if self.metric not in ("accuracy", "auc"):
            raise ConfigurationError(f"unknown metric {self.metric!r}")
        if self.metric == "auc" and net.n_out != 1:
            raise ConfigurationError("metric 'auc' requires a single output neuron")
        if self.timing not in ("wall", "off"):
            raise ConfigurationError("timing must be 'wall' or 'off'")
        if self.transport not in ("inproc", "tcp"):
            raise ConfigurationError(f"unknown transport {self.transport!r}")
        if self.processes and self.transport != "tcp":
            raise ConfigurationError("one process per worker needs the tcp transport")


# -- data --------------------------------------------------------------------

@dataclass
class Prepared:
    train: Batch
    test: Batch | None
    labels: LabelMap
    scaler: Scaler


def prepare_data(cfg: RunConfig, net: NetConfig) -> Prepared:
    if not cfg.train:
        raise ConfigurationError("no training file given (config key 'train' or --train)")
    n_features = cfg.n_features or net.layer_sizes[0]
    tr = load_dataset(cfg.train, n_features)
    te = load_dataset(cfg.test, n_features) if cfg.test else None
    labels = LabelMap(tr.labels, binary=net.n_out == 1)
    if labels.n_outputs != net.n_out:
        raise ConfigurationError(f"training labels give {labels.n_outputs} outputs but the net has {net.n_out}")
    fit_on = tr.features
    if cfg.scaling == "global-min-max" and te is not None:
        fit_on = np.vstack([tr.features, te.features])
    scaler = Scaler.fit(fit_on, cfg.scaling)
    train = Batch(scaler.transform(tr.features), labels.encode(tr.labels))
    test = Batch(scaler.transform(te.features), labels.encode(te.labels)) if te is not None else None
    return Prepared(train, test, labels, scaler)


def _scaler_meta(scaler: Scaler):
    params = {k: np.asarray(v).tolist() for k, v in scaler.params.items()}
    return {"mode": scaler.mode, "params": params}


def _scaler_from_meta(meta) -> Scaler:
    params = {k: np.asarray(v, dtype=np.float64) for k, v in meta.get("params", {}).items()}
    if meta.get("mode") == "global-min-max":
        params = {k: float(v) for k, v in params.items()}
    return Scaler(meta.get("mode", "none"), params)


# -- output ------------------------------------------------------------------

def _out_dir(cfg: RunConfig, default_name):
    out = cfg.out or os.path.join(os.environ.get(SCRATCH_ENV, "."), default_name)
    Path(out).mkdir(parents=True, exist_ok=True)
    return Path(out)


def csv_row(it, elapsed, f, metric):
    return f"{int(it)},{float(elapsed):.6f},{float(f)!r},{float(metric)!r}"


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return _json_safe(value.item())
    return value


class MetricsSink:
    """Writes CSV rows to a file and echoes them to a stream; also keeps a
    JSON-lines log of the full per-iteration records."""

    def __init__(self, out_dir: Path, echo=None):
        self.csv = open(out_dir / "metrics.csv", "w", newline="")
        self.log = open(out_dir / "history.jsonl", "w")
        self.echo = echo
        self._write(CSV_HEADER)

    def _write(self, line):
        self.csv.write(line + "\n")
        self.csv.flush()
        if self.echo is not None:
            print(line, file=self.echo, flush=True)

    def __call__(self, rec):
        self._write(csv_row(rec.iter, rec.elapsed_sec, rec.f, rec.metric))
        payload = {k: _json_safe(v) for k, v in dataclasses.asdict(rec).items() if k != "direction"}
        self.log.write(json.dumps(payload, sort_keys=True) + "\n")
        self.log.flush()

    def close(self):
        self.csv.close()
        self.log.close()


# -- subcommands -------------------------------------------------------------

def _newton_hyper(cfg: RunConfig) -> NewtonHyper:
    return NewtonHyper(**cfg.newton)


def _newton_setup(cfg: RunConfig):
    net = cfg.net_config()
    cfg.validate(net)
    split = cfg.split_structure(net)
    data = prepare_data(cfg, net)
    return net, split, data


def _finish_newton(cfg, out, net, data, result):
    final_metric = result.history[-1].metric if result.history else float("nan")
    meta = {
        "classes": data.labels.classes.tolist(),
        "binary": data.labels.binary,
        "scaling": _scaler_meta(data.scaler),
        "metric": cfg.metric,
        "final_metric": _json_safe(final_metric),
        "trainer": "newton",
    }
    save_checkpoint(out / "checkpoint.bin",
                    Checkpoint(net, result.theta, len(result.history) - 1, result.lam, meta))


def cmd_train_newton(cfg: RunConfig, echo=None) -> int:
    echo = echo or sys.stdout
    net, split, data = _newton_setup(cfg)
    out = _out_dir(cfg, "newton-run")
    hyper = _newton_hyper(cfg)
    if cfg.processes:
        return _launch_processes(cfg, out, Topology(net, split).size)
    sink = MetricsSink(out, echo)
    try:
        result = newton_train(data.train, net, split, hyper, seed=cfg.seed, max_iter=cfg.max_iter,
                              test=data.test, metric=cfg.metric, init=cfg.init, transport=cfg.transport,
                              timing=cfg.timing == "wall", on_record=sink, timeout=cfg.timeout,
                              endpoints=cfg.endpoints or None)
    finally:
        sink.close()
    _finish_newton(cfg, out, net, data, result)
    return 0


def _launch_processes(cfg: RunConfig, out: Path, size: int) -> int:
    """One OS process per partition over TCP; this process only hands out
    the endpoint list and waits."""
    endpoints = cfg.endpoints
    if not endpoints:
        socks, endpoints = free_listeners(size)
        for s in socks:
            s.close()
    if len(endpoints) != size:
        raise ConfigurationError(f"{len(endpoints)} endpoints given for {size} partitions")
    spec = dataclasses.asdict(cfg)
    spec.update(endpoints=list(endpoints), out=str(out), processes=False)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(spec, fh)
        spec_path = fh.name
    try:
        procs = [subprocess.Popen([sys.executable, "-m", "distnewton", "worker", "--config", spec_path,
                                   "--rank", str(r)]) for r in range(size)]
        codes = [p.wait() for p in procs]
    finally:
        os.unlink(spec_path)
    failed = [r for r, c in enumerate(codes) if c != 0]
    if failed:
        print(f"error: workers {failed} exited with non-zero status", file=sys.stderr)
        return 1
    with open(out / "metrics.csv") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_worker(cfg: RunConfig, rank: int) -> int:
    """Body of one worker process started by ``_launch_processes``."""
    net, split, data = _newton_setup(cfg)
    out = Path(cfg.out)
    topo = Topology(net, split)
    is_notifier = rank == topo.notifier
    sink = MetricsSink(out) if is_notifier else None
    topo, program = make_program(data.train, net, split, _newton_hyper(cfg), cfg.seed, cfg.max_iter,
                                 data.test, cfg.metric, None, cfg.init, cfg.timing == "wall",
                                 on_record=sink)
    transport = TcpTransport(rank, cfg.endpoints, cfg.timeout)
    try:
        result = program(rank, Communicator(transport))
    finally:
        transport.close()
        if sink is not None:
            sink.close()
    if is_notifier:
        _finish_newton(cfg, out, net, data, result)
    return 0


def cmd_train_sgd(cfg: RunConfig, echo=None) -> int:
    echo = echo or sys.stdout
    from .dist.newton import initial_theta

    net = cfg.net_config()
    cfg.validate(net)
    data = prepare_data(cfg, net)
    out = _out_dir(cfg, "sgd-run")
    params = dict(cfg.sgd)
    params.setdefault("max_epochs", None)
    hyper = SgdHyper(**params)
    evaluator = (lambda o: evaluate(o, data.test.labels, cfg.metric)) if data.test is not None else None
    sink = MetricsSink(out, echo)
    try:
        result = sgd_train(data.train, net, hyper, seed=cfg.seed, theta0=initial_theta(net, cfg.seed, cfg.init),
                           evaluator=evaluator, test=data.test, timing=cfg.timing == "wall", on_record=sink)
    finally:
        sink.close()
    meta = {
        "classes": data.labels.classes.tolist(),
        "binary": data.labels.binary,
        "scaling": _scaler_meta(data.scaler),
        "metric": cfg.metric,
        "final_metric": _json_safe(result.history[-1].metric if result.history else float("nan")),
        "trainer": "sgd",
        "early_stopped": result.early_stopped,
    }
    save_checkpoint(out / "checkpoint.bin", Checkpoint(net, result.theta, result.epochs, float("nan"), meta))
    return 0


def evaluate_checkpoint(ckpt: Checkpoint, test_path, metric=None) -> float:
    meta = ckpt.meta
    net = ckpt.net
    data = load_dataset(test_path, net.layer_sizes[0])
    if data.features.shape[1] != net.layer_sizes[0]:
        raise ConfigurationError("test data does not fit the checkpoint's network")
    labels = LabelMap(meta.get("classes", np.unique(data.labels)), binary=meta.get("binary", net.n_out == 1))
    if labels.n_outputs != net.n_out:
        raise ConfigurationError(f"checkpoint net has {net.n_out} outputs but its label map gives {labels.n_outputs}")
    X = _scaler_from_meta(meta.get("scaling", {})).transform(data.features)
    outputs = forward_ref(Theta.unflatten(net, ckpt.theta), X).output
    return evaluate(outputs, labels.encode(data.labels), metric or meta.get("metric", "accuracy"))


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    metric = args.metric or ckpt.meta.get("metric", "accuracy")
    value = evaluate_checkpoint(ckpt, args.test, metric)
    print(f"{metric},{value!r}")
    return 0


PLAN_COLUMNS = ["partition", "layer", "in_group", "out_group", "in_start", "in_stop", "out_start", "out_stop",
                "owns_bias", "n_vars", "memory", "function", "gradient", "jacobian", "matvec",
                "reduce_comm", "bcast_comm"]


def cmd_partition_plan(cfg: RunConfig, instances=None, sample_rate=None, out=None) -> int:
    out = out or sys.stdout
    net = cfg.net_config()
    split = cfg.split_structure(net)
    topo = Topology(net, split)
    if instances is None:
        if not cfg.train:
            raise ConfigurationError("give --instances or a training file to size the plan")
        with open(cfg.train) as fh:
            instances = sum(1 for line in fh if line.strip())
    rate = sample_rate if sample_rate is not None else cfg.newton.get("sample_rate", NewtonHyper.sample_rate)
    sample = max(1, math.ceil(rate * instances))
    costs = cost_estimate(topo.partitions, net, instances, sample, CostModelParams())
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PLAN_COLUMNS)
    for p, c in zip(topo.partitions, costs):
        writer.writerow([p.index, p.layer, p.in_group, p.out_group, *p.in_range, *p.out_range,
                         int(p.owns_bias), p.n_vars, c["memory"], c["function"], c["gradient"], c["jacobian"],
                         c["matvec"], repr(c["reduce_comm"]), repr(c["bcast_comm"])])
    rep = balance_report(topo.partitions)
    print(f"# {len(topo.partitions)} partitions for net {net} split {split}; "
          f"max/min weights {rep['max_vars']}/{rep['min_vars']} = {rep['ratio']:g}; "
          f"max reduce {max(c['reduce_comm'] for c in costs):.3g}, "
          f"max broadcast {max(c['bcast_comm'] for c in costs):.3g}", file=sys.stderr)
    return 0


def cmd_gn_check(cfg: RunConfig, instances=200, out=None) -> int:
    out = out or sys.stdout
    from .oracle_check import gn_check_report

    net = cfg.net_config()
    cfg.validate(net)
    split = cfg.split_structure(net)
    data = prepare_data(cfg, net)
    train = data.train if len(data.train) <= instances else data.train.subset(np.arange(instances))
    rows = gn_check_report(train, net, split, _newton_hyper(cfg), cfg.seed, cfg.init)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["check", "value"])
    for name, value in rows:
        writer.writerow([name, repr(value) if isinstance(value, float) else value])
    return 0


# -- argument parsing ----------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--transport", choices=["inproc", "tcp"])
    p.add_argument("--metric", choices=["accuracy", "auc"])
    p.add_argument("--max-iter", type=int, help="Newton iterations, or an epoch cap for train-sgd")
    p.add_argument("--out", help=f"output directory (default under ${SCRATCH_ENV} or the working directory)")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--net", help="layer sizes, e.g. 16-300-300-10")
    p.add_argument("--split", help="neuron groups per layer, e.g. 1-2-2-1")
    p.add_argument("--scaling", choices=["none", "per-feature", "divide-255", "global-min-max"])
    p.add_argument("--init", choices=["sparse", "dense"])
    p.add_argument("--timing", choices=["wall", "off"], help="'off' writes 0 elapsed time for byte-stable CSV")


def _flag_type(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    tp = args[0] if args else tp
    return tp if tp in (int, float, str) else float


def _hyper_flags(p, cls, skip=()):
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        if f.name not in skip:
            p.add_argument("--" + f.name.replace("_", "-"), dest="hyper_" + f.name, type=_flag_type(hints[f.name]))


def build_parser():
    ap = argparse.ArgumentParser(prog="distnewton", description="Distributed Newton training for feedforward nets.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-newton", help="train with the distributed subsampled Gauss-Newton method")
    _add_common(p)
    _hyper_flags(p, NewtonHyper)
    p.add_argument("--processes", action="store_true", help="run each worker in its own process (tcp only)")

    p = sub.add_parser("train-sgd", help="train with mini-batch SG with momentum")
    _add_common(p)
    _hyper_flags(p, SgdHyper, skip=("max_epochs",))

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--metric", choices=["accuracy", "auc"])

    p = sub.add_parser("partition-plan", help="print the partition table with cost estimates as CSV")
    _add_common(p)
    p.add_argument("--instances", type=int, help="training-set size (default: count rows of the training file)")
    p.add_argument("--sample-rate", type=float)

    p = sub.add_parser("gn-check", help="compare distributed quantities with dense oracles on one iteration")
    _add_common(p)
    _hyper_flags(p, NewtonHyper)
    p.add_argument("--instances", type=int, default=200)

    p = sub.add_parser("worker", help=argparse.SUPPRESS)
    p.add_argument("--config", required=True)
    p.add_argument("--rank", type=int, required=True)
    return ap


def config_from_args(args, section=None) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None))
    for key in ("seed", "transport", "metric", "max_iter", "out", "train", "test", "net", "split",
                "scaling", "init", "timing"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "processes", False):
        cfg.processes = True
    if section is not None:
        overrides = {k[len("hyper_"):]: v for k, v in vars(args).items() if k.startswith("hyper_") and v is not None}
        merged = dict(getattr(cfg, section))
        merged.update(overrides)
        setattr(cfg, section, merged)
    if section == "sgd" and getattr(args, "max_iter", None) is not None:
        cfg.sgd["max_epochs"] = args.max_iter
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train-newton":
            return cmd_train_newton(config_from_args(args, "newton"))
        if args.command == "train-sgd":
            return cmd_train_sgd(config_from_args(args, "sgd"))
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "partition-plan":
            return cmd_partition_plan(config_from_args(args), args.instances, args.sample_rate)
        if args.command == "gn-check":
            return cmd_gn_check(config_from_args(args, "newton"), args.instances)
        if args.command == "worker":
            return cmd_worker(RunConfig(**json.loads(Path(args.config).read_text())), args.rank)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        where = getattr(exc, "worker", None)
        suffix = f" (partition {where})" if where is not None else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return 1
    return 0
