"""Command line front end: ``casimir train | eval | bench``.

Runs are configured by a flat ``key = value`` text file; ``--set key=value`` and the named
flags override it. Every source of randomness derives from ``seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError, ModelFormatError
from .loss import Objective
from .optim import (
    InnerSolverBudget,
    ProxLinearConfig,
    SvrgConfig,
    casimir_run,
    make_schedule,
    proxlinear_run,
    sgd_run,
    svrg_run,
)
from .smoothing import SMOOTHER_KINDS, SmoothingConfig
from .tasks import HASH_VERSION, HashedChainModel, evaluate, featurize, read_conll

ALGORITHMS = ("sgd", "svrg", "casimir-svrg-const", "casimir-svrg-adapt", "proxlinear")
WARM_STARTS = ("prox-center", "prev-iterate", "extrapolation")
RNG_VERSIONS = ("pcg64",)
CSV_COLUMNS = ("iter", "oracle_calls", "train_objective", "eval_metric", "wall_ms")
BENCH_COLUMNS = ("algorithm", "seed", "checkpoint", "oracle_calls", "objective", "metric")

MAGIC = b"CSMRMDL\0"
FORMAT_VERSION = 1

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


# --- configuration ----------------------------------------------------------------


def _opt_float(s):
    return None if s.lower() in ("", "none", "auto") else float(s)


def _opt_int_or_n(s):
    return None if s.lower() in ("", "none", "n") else int(s)


def _str_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _int_list(s):
    return tuple(int(x) for x in _str_list(s))


def _bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# key -> (parser, default)
SCHEMA = {
    "train": (str, None),
    "eval": (str, ""),
    "algorithm": (str, "casimir-svrg-const"),
    "smoother": (str, "topk_l2"),
    "mu": (float, 1.0),
    "K": (int, 5),
    "c": (float, 1.0),
    "iters": (int, 10),
    "seed": (int, 0),
    "rng": (str, "pcg64"),
    "inner_budget": (_opt_int_or_n, None),
    "warm_start": (str, "prox-center"),
    "lipschitz": (_opt_float, None),
    "kappa": (_opt_float, None),
    "gamma0": (float, 1.0),
    "t0": (_opt_int_or_n, None),
    "eta": (float, 1.0),
    "eps0": (float, 1.0),
    "window": (int, 2),
    "hash_bits": (int, 16),
    "hash_seed": (int, 0),
    "csv": (str, "metrics.csv"),
    "model": (str, "model.bin"),
    "algorithms": (_str_list, ("sgd", "casimir-svrg-const")),
    "seeds": (_int_list, (0,)),
    "bench_csv": (str, "bench.csv"),
    "count_full_gradients": (_bool, False),
    "wall_time": (_bool, False),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def replace(self, **kw) -> "RunConfig":
        return RunConfig({**self.values, **kw})


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw ``key -> string`` pairs; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    return raw


def build_config(raw: dict) -> RunConfig:
    """Validate raw pairs against the schema and fill in defaults."""
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as err:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({err})") from None
        else:
            values[key] = default
    if not values["train"]:
        raise ConfigError("config needs a 'train' data path")
    for algo in (values["algorithm"], *values["algorithms"]):
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    if values["smoother"] not in SMOOTHER_KINDS:
        raise ConfigError(f"unknown smoother {values['smoother']!r}; expected one of {SMOOTHER_KINDS}")
    if values["warm_start"] not in WARM_STARTS:
        raise ConfigError(f"unknown warm start {values['warm_start']!r}")
    if values["rng"] not in RNG_VERSIONS:
        raise ConfigError(f"unsupported generator {values['rng']!r}; expected one of {RNG_VERSIONS}")
    if values["iters"] < 0 or values["K"] < 1 or not values["mu"] > 0 or not values["c"] > 0:
        raise ConfigError("need iters >= 0, K >= 1, mu > 0 and c > 0")
    if not values["seeds"]:
        raise ConfigError("seeds must list at least one seed")
    return RunConfig(values)


def load_config(args) -> RunConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        raw.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
        for key in ("train", "eval"):  # data paths in a config file are relative to it
            if raw.get(key) and not Path(raw[key]).is_absolute():
                raw[key] = str(path.parent / raw[key])
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    for key in SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = ",".join(map(str, flag)) if isinstance(flag, list) else str(flag)
    return build_config(raw)


# --- model files ----------------------------------------------------------------------


def save_model(path, model: HashedChainModel, w) -> None:
    """Little-endian binary: magic, format version, hash version, d, alphabet, hash metadata, weights."""
    w = np.asarray(w, dtype="<f8")
    if w.shape != (model.d,):
        raise InvalidInputError(f"weights have shape {w.shape}, model needs ({model.d},)")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HHQI", FORMAT_VERSION, HASH_VERSION, model.d, len(model.label_alphabet)))
    for tag in model.label_alphabet:
        enc = tag.encode("utf-8")
        buf.write(struct.pack("<I", len(enc)) + enc)
    buf.write(struct.pack("<IIIQ", model.num_columns, model.window, model.hash_bits, model.hash_seed))
    buf.write(w.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_model(path):
    """Inverse of :func:`save_model`. Returns ``(model, w)``."""
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic number, not a model file")
    try:
        pos = len(MAGIC)
        version, hash_version, d, num_tags = struct.unpack_from("<HHQI", data, pos)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"{path}: model format version {version}, this build reads version {FORMAT_VERSION}")
        if hash_version != HASH_VERSION:
            raise ModelFormatError(f"{path}: hash version {hash_version}, this build uses version {HASH_VERSION}")
        pos += struct.calcsize("<HHQI")
        alphabet = []
        for _ in range(num_tags):
            (size,) = struct.unpack_from("<I", data, pos)
            pos += 4
            alphabet.append(data[pos : pos + size].decode("utf-8"))
            pos += size
        num_columns, window, hash_bits, hash_seed = struct.unpack_from("<IIIQ", data, pos)
        pos += struct.calcsize("<IIIQ")
    except (struct.error, UnicodeDecodeError) as err:
        raise ModelFormatError(f"{path}: truncated or corrupted header ({err})") from None
    if len(data) - pos != 8 * d:
        raise ModelFormatError(f"{path}: expected {8 * d} weight bytes, found {len(data) - pos}")
    model = HashedChainModel(alphabet, num_columns, window, hash_bits, hash_seed)
    if model.d != d:
        raise ModelFormatError(f"{path}: header says d={d}, metadata implies d={model.d}")
    return model, np.frombuffer(data, dtype="<f8", offset=pos).copy()


# --- training ---------------------------------------------------------------------------


@dataclass
class Run:
    model: HashedChainModel
    objective: Objective
    eval_set: object


def prepare(cfg: RunConfig) -> Run:
    train = read_conll(cfg.train)
    if len(train) == 0:
        raise InvalidInputError(f"{cfg.train}: no training sentences")
    model = featurize(train, cfg.window, cfg.hash_bits, cfg.hash_seed)
    examples = model.encode(train)
    eval_set = read_conll(cfg.eval, train.label_alphabet) if cfg.eval else train
    smoothing = SmoothingConfig(cfg.smoother, cfg.mu, cfg.K)
    return Run(model, Objective(model, examples, cfg.c / len(examples), smoothing), eval_set)


def run_algorithm(cfg: RunConfig, run: Run, algorithm: str, seed: int):
    """Run one optimizer from zero. Returns ``(w, trace)``; ``trace.rows[0]`` is the start point."""
    obj, n = run.objective, run.objective.n
    w0 = np.zeros(obj.d)

    def metric(w):
        return evaluate(run.model, w, run.eval_set).hamming_accuracy

    if algorithm == "sgd":
        return sgd_run(obj, cfg.gamma0, cfg.t0 or n, w0, cfg.iters, seed=seed, metric=metric)
    if algorithm == "svrg":
        L = cfg.lipschitz if cfg.lipschitz is not None else obj.feature_scale() / cfg.mu
        return svrg_run(obj, 1.0 / (L + obj.lam), w0, cfg.iters, seed=seed, metric=metric)
    if algorithm == "proxlinear":
        pl = ProxLinearConfig(eta=cfg.eta, eps0=cfg.eps0, smoothing=obj.smoothing, L0=cfg.lipschitz)
        return proxlinear_run(obj, pl, w0, cfg.iters, seed=seed, metric=metric)
    A = cfg.lipschitz * cfg.mu if cfg.lipschitz is not None else obj.feature_scale()
    kappa = cfg.kappa
    if kappa is None:
        ratio = A / (cfg.mu * n)
        kappa = ratio - obj.lam if ratio > 4.0 * obj.lam else obj.lam
    kind = "sc-const" if algorithm == "casimir-svrg-const" else "nonsc-adaptive"
    schedule = make_schedule(kind, obj.lam, kappa=kappa, mu=cfg.mu)
    inner = SvrgConfig(InnerSolverBudget("fixed", cfg.inner_budget), lipschitz=cfg.lipschitz, feature_scale=A)
    return casimir_run(obj, schedule, w0, cfg.iters, inner, cfg.warm_start, seed=seed, metric=metric)


def _num(x) -> str:
    return repr(float(x))


def _calls(row, count_full: bool) -> int:
    return row.oracle_calls + (row.anchor_calls if count_full else 0)


def trace_csv(trace, cfg: RunConfig) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in trace.rows[1:]:
        wall = _num(1000.0 * row.wall_time) if cfg.wall_time else "0"
        writer.writerow((row.iteration, _calls(row, cfg.count_full_gradients), _num(row.objective),
                         _num(row.metric), wall))
    return out.getvalue()


def cmd_train(cfg: RunConfig) -> int:
    if not Path(cfg.train).is_file() or (cfg.eval and not Path(cfg.eval).is_file()):
        missing = cfg.train if not Path(cfg.train).is_file() else cfg.eval
        print(f"error: data file not found: {missing}", file=sys.stderr)
        return EXIT_USAGE
    run = prepare(cfg)
    try:
        w, trace = run_algorithm(cfg, run, cfg.algorithm, cfg.seed)
    except DivergenceError as err:
        if err.trace is not None:
            Path(cfg.csv).write_text(trace_csv(err.trace, cfg), encoding="utf-8")
        print(f"error: optimizer diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    Path(cfg.csv).write_text(trace_csv(trace, cfg), encoding="utf-8")
    save_model(cfg.model, run.model, w)
    return EXIT_OK


def cmd_eval(model_path, data_path) -> int:
    for p in (model_path, data_path):
        if not Path(p).is_file():
            print(f"error: file not found: {p}", file=sys.stderr)
            return EXIT_USAGE
    model, w = load_model(model_path)
    data = read_conll(data_path, model.label_alphabet)
    m = evaluate(model, w, data)
    print(json.dumps({"hamming_accuracy": m.hamming_accuracy, "token_f1_micro": m.token_f1_micro,
                      "per_class_f1": m.per_class_f1}, sort_keys=True))
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    """Long-format CSV, one row per (algorithm, seed, checkpoint)."""
    if not Path(cfg.train).is_file():
        print(f"error: data file not found: {cfg.train}", file=sys.stderr)
        return EXIT_USAGE
    run = prepare(cfg)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    status = EXIT_OK
    for algorithm in cfg.algorithms:
        for seed in cfg.seeds:
            try:
                _, trace = run_algorithm(cfg, run, algorithm, seed)
            except DivergenceError as err:
                print(f"warning: {algorithm} seed {seed} diverged: {err}", file=sys.stderr)
                trace, status = err.trace, EXIT_DIVERGED
                if trace is None:
                    continue
            for row in trace.rows[1:]:
                writer.writerow((algorithm, seed, row.iteration, _calls(row, cfg.count_full_gradients),
                                 _num(row.objective), _num(row.metric)))
    Path(cfg.bench_csv).write_text(out.getvalue(), encoding="utf-8")
    return status


# --- entry point --------------------------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--train", help="training data (CoNLL columns)")
    p.add_argument("--eval", help="evaluation data for the per-iteration metric")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="outer iterations (epochs for sgd/svrg)")
    p.add_argument("--csv", help="metrics CSV output path")
    p.add_argument("--wall-time", dest="wall_time", action="store_const", const="true",
                   help="record wall-clock milliseconds (otherwise 0, keeping output deterministic)")
    p.add_argument("--count-full-gradients", dest="count_full_gradients", action="store_const", const="true",
                   help="include full-gradient anchor passes in oracle_calls")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="casimir", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    train = sub.add_parser("train", help="train a tagger and write a metrics CSV and a model file")
    _add_run_flags(train)
    train.add_argument("--algorithm", choices=ALGORITHMS)
    train.add_argument("--model", help="model output path")
    ev = sub.add_parser("eval", help="evaluate a model file on CoNLL data and print JSON metrics")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    bench = sub.add_parser("bench", help="run several algorithms and seeds into one long-format CSV")
    _add_run_flags(bench)
    bench.add_argument("--algorithms", help="comma-separated algorithm list")
    bench.add_argument("--seeds", help="comma-separated seed list")
    bench.add_argument("--out", dest="bench_csv", help="bench CSV output path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args.model, args.data)
        cfg = load_config(args)
        return cmd_train(cfg) if args.command == "train" else cmd_bench(cfg)
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFormatError, InvalidInputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
