"""Command-line front end: ``basketdpp {summary,train,eval,complete,gradcheck}``.

Every option can also come from a ``key = value`` config file passed with
``--config``; flags given on the command line win.  Exit codes: 0 success,
2 input error, 3 protocol/config error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields

from . import data as data_mod
from .errors import BasketDppError, ConfigError, InputError
from .evaluation import evaluate, model_scorer
from .gradcheck import run_gradcheck
from .models import (
    KINDS,
    greedy_complete,
    load_model,
    rank_targets,
    save_model,
    success_probability_logistic,
)
from .trainer import TrainConfig, train

log = logging.getLogger("basketdpp")


def _optional_int(text):
    if text is None or str(text).lower() in ("", "none", "inf"):
        return None
    return int(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    # data
    data: str = ""
    format: str = "basket-lines"
    ordered: bool = False
    min_item_count: int = 0
    min_basket_size: int = 2
    max_basket_size: int | None = None
    train_fraction: float = 0.7
    protocol: str = "random-holdout"
    # training
    model: str = "multitask"
    rank: int = 50
    alpha0: float = 1.0
    step: float = 0.01
    momentum: float = 0.9
    minibatch_size: int = 128
    max_epochs: int = 60
    convergence_tol: float = 1e-4
    w: float = 0.01
    seed: int = 0
    negative_ratio: float = 1.0
    # io and runtime
    model_file: str = "model.bdpp"
    out: str = ""
    report: str = ""
    workers: int = 1
    mask_context: bool = False
    # completion
    basket: str = ""
    count: int = 5
    # gradient check
    kind: str = "all"
    instances: int = 5
    items: int = 8
    check_rank: int = 3
    tolerance: float = 1e-4

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            rank=self.rank,
            alpha0=self.alpha0,
            step=self.step,
            momentum=self.momentum,
            minibatch_size=self.minibatch_size,
            max_epochs=self.max_epochs,
            convergence_tol=self.convergence_tol,
            w=self.w,
            seed=self.seed,
            negative_ratio=self.negative_ratio,
        )


def _converter(f):
    if f.type == "int | None":
        return _optional_int
    return {"int": int, "float": float, "str": str, "bool": _bool}.get(f.type, str)


FIELDS = {f.name: f for f in fields(RunConfig)}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    values = {}
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _converter(FIELDS[key])(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


GROUPS = {
    "data": ["data", "format", "ordered", "min_item_count", "min_basket_size", "max_basket_size",
             "train_fraction", "protocol", "seed"],
    "train": ["model", "rank", "alpha0", "step", "momentum", "minibatch_size", "max_epochs",
              "convergence_tol", "w", "negative_ratio", "model_file", "report", "workers"],
    "eval": ["model_file", "out", "mask_context", "workers", "negative_ratio"],
    "complete": ["model_file", "basket", "count", "out"],
    "gradcheck": ["kind", "instances", "items", "check_rank", "tolerance", "seed", "w", "out"],
}

HELP = {
    "data": "basket file",
    "format": f"one of {data_mod.FORMATS}",
    "ordered": "basket-lines tokens are in the order items were added",
    "protocol": "random-holdout, last-item-holdout or mixed",
    "model": f"one of {KINDS}",
    "model_file": "model file to write (train) or read",
    "report": "write the per-epoch training log here as well",
    "out": "write machine-readable results here instead of stdout",
    "mask_context": "drop context items from the ranking",
    "basket": "comma-separated item tokens",
    "kind": f"'all' or one of {KINDS}",
    "items": "catalog size of random gradient-check instances",
    "check_rank": "rank of random gradient-check instances",
    "tolerance": "maximum allowed relative error",
    "workers": "threads for gradient and scoring work (results do not depend on it)",
}


def _add_options(parser, names):
    seen = set()
    for name in names:
        if name in seen:
            continue
        seen.add(name)
        f = FIELDS[name]
        flag = "--" + name.replace("_", "-")
        kwargs = {"dest": name, "default": argparse.SUPPRESS, "help": HELP.get(name)}
        if f.type == "bool":
            kwargs["action"] = "store_true"
        else:
            kwargs["type"] = _converter(f)
        parser.add_argument(flag, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basketdpp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    layout = {
        "summary": ["data"],
        "train": ["data", "train"],
        "eval": ["data", "eval"],
        "complete": ["complete"],
        "gradcheck": ["gradcheck"],
    }
    for command, groups in layout.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key = value config file")
        _add_options(p, [n for g in groups for n in GROUPS[g]])
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    values.update({k: v for k, v in vars(args).items() if k in FIELDS})
    return RunConfig(**values)


# -- commands ---------------------------------------------------------------------


def _emit(cfg: RunConfig, text: str):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_dataset(cfg: RunConfig):
    if not cfg.data:
        raise InputError("no data file given (--data)")
    if not os.path.exists(cfg.data):
        raise InputError(f"data file not found: {cfg.data}")
    return data_mod.load_baskets(cfg.data, cfg.format, ordered=cfg.ordered)


def _prepare(cfg: RunConfig):
    ds = _load_dataset(cfg)
    ds = data_mod.filter_dataset(ds, cfg.min_item_count, cfg.min_basket_size, cfg.max_basket_size)
    protocol = data_mod.ProtocolSpec.named(cfg.protocol)
    if protocol.needs_order and not ds.ordered:
        raise ConfigError(f"protocol {cfg.protocol!r} needs ordered baskets")
    parts = data_mod.split(ds, cfg.train_fraction, cfg.seed)
    examples = data_mod.make_examples(parts, protocol, cfg.negative_ratio, cfg.seed)
    return parts, examples


def cmd_summary(cfg: RunConfig) -> int:
    _emit(cfg, json.dumps(_load_dataset(cfg).summary()))
    return 0


def cmd_train(cfg: RunConfig) -> int:
    if cfg.model not in KINDS:
        raise ConfigError(f"unknown model kind {cfg.model!r}")
    parts, examples = _prepare(cfg)
    log.info(
        "training %s on %d observations over %d items", cfg.model, len(examples.train), parts.catalog.p
    )
    trainer_log = logging.getLogger("basketdpp.trainer")
    handler, old_level = None, trainer_log.level
    if cfg.report:
        handler = logging.FileHandler(cfg.report, mode="w", encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(message)s"))
        handler.setLevel(logging.INFO)
        trainer_log.addHandler(handler)
        trainer_log.setLevel(logging.INFO)
    try:
        model, report = train(cfg.model, examples.train, parts.catalog, cfg.train_config(), workers=cfg.workers)
    finally:
        if handler is not None:
            trainer_log.removeHandler(handler)
            trainer_log.setLevel(old_level)
            handler.close()
    save_model(cfg.model_file, model, parts.catalog.tokens)
    log.info("wrote %s after %d epochs (loglik %.6g)", cfg.model_file, report.epochs_run, report.final_loglik)
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    model, tokens = _read_model(cfg.model_file)
    parts, examples = _prepare(cfg)
    if list(tokens) != list(parts.catalog.tokens):
        raise ConfigError("model catalog does not match the catalog rebuilt from the data; "
                          "use the same data, filters, fraction and seed as for training")
    report = evaluate(model_scorer(model), examples.test, mask_context=cfg.mask_context, workers=cfg.workers)
    print(report.table(model.kind), file=sys.stderr)
    _emit(cfg, report.to_json())
    return 0


def _read_model(path):
    if not os.path.exists(path):
        raise InputError(f"model file not found: {path}")
    return load_model(path)


def cmd_complete(cfg: RunConfig) -> int:
    model, tokens = _read_model(cfg.model_file)
    index = {t: i for i, t in enumerate(tokens)}
    basket = [t.strip() for t in cfg.basket.split(",") if t.strip()]
    if not basket:
        raise InputError("empty basket (--basket a,b,...)")
    unknown = [t for t in basket if t not in index]
    if unknown:
        raise InputError(f"unknown item token(s): {', '.join(unknown)}")
    idx = [index[t] for t in basket]
    if model.kind == "logistic":
        picks = greedy_complete(model, idx, cfg.count)
        rows, current = [], list(idx)
        for j in picks:
            current.append(j)
            rows.append({"item": tokens[j], "probability": success_probability_logistic(model, current)})
    else:
        ranked = rank_targets(model, idx)[: cfg.count]
        rows = [{"item": tokens[t], "probability": s} for t, s in ranked]
    _emit(cfg, json.dumps(rows))
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    kinds = KINDS if cfg.kind == "all" else (cfg.kind,)
    if any(k not in KINDS for k in kinds):
        raise ConfigError(f"unknown model kind {cfg.kind!r}")
    results = run_gradcheck(kinds, cfg.instances, cfg.items, cfg.check_rank, cfg.seed, w=cfg.w)
    summary = {}
    for kind in kinds:
        errs = [r.max_error for r in results if r.kind == kind]
        summary[kind] = max(errs)
        print(f"{kind:18s} max relative error {max(errs):.3e}", file=sys.stderr)
    passed = all(v <= cfg.tolerance for v in summary.values())
    _emit(cfg, json.dumps({"max_relative_error": summary, "tolerance": cfg.tolerance, "passed": passed}))
    return 0 if passed else 4


COMMANDS = {
    "summary": cmd_summary,
    "train": cmd_train,
    "eval": cmd_eval,
    "complete": cmd_complete,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except BasketDppError as exc:
        print(f"basketdpp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"basketdpp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
