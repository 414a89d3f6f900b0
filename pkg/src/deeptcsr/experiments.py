"""Command-line experiments: generate, train, evaluate, compare, ablate-tau.

Configuration is a flat ``key = value`` text file with dotted keys
(``#`` starts a comment).  Values are resolved with increasing precedence::

    built-in defaults < architecture defaults < --config file < --seed/--out < key=value arguments

Every command writes ``resolved_config.json`` into its output directory;
passing that file back through ``--config`` reruns the command identically.

Keys
----
``seed``                      global seed (splits, calibration pilot, default generator seed)
``data.path``                 dataset JSONL (train / compare / ablate-tau source)
``data.test_path``            optional explicit test set for compare / ablate-tau
``gen.n gen.dim gen.horizon`` random-walk generator size
``gen.b``                     intercept; calibrated to ``gen.censoring`` when absent
``gen.a``                     comma-separated coefficients; unit vector from ``gen.a_seed`` when absent
``gen.seed gen.test_n gen.test_seed``
``model.arch model.hidden``   ``linear-cox`` or ``feedforward``
``train.*``                   lambda, tau, lr, weight_decay, batch_size, epochs, loss_mode,
                              table_mode, optimizer, beta1, beta2, eps, seed, record_time
``eval.checkpoint eval.data``
``sweep.sizes sweep.seeds sweep.methods sweep.lambdas sweep.taus sweep.split``
                              split is ``fresh`` (generator only), ``holdout:F`` or ``kfold:K``
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .hazard_model import FEEDFORWARD, LINEAR, init_params
from .metrics import evaluate, variability_delta, window_hazards
from .seqdata import dataset_stats, load_dataset, save_dataset
from .synthgen import RwConfig, calibrate_intercept, default_coefficients, generate_random_walk
from .trainer import TrainConfig, fit, load_checkpoint, save_checkpoint

log = logging.getLogger("deeptcsr")

DEFAULTS = {
    "seed": "0",
    "model.arch": LINEAR,
    "model.hidden": "16",
    "gen.censoring": "0.2",
    "gen.test_n": "1000",
    "gen.test_seed": "999999",
    "train.lambda": "0.0",
    "train.loss_mode": "dtcsr",
    "train.table_mode": "within_window",
    "train.optimizer": "adam",
    "train.beta1": "0.9",
    "train.beta2": "0.999",
    "train.eps": "1e-08",
    "train.record_time": "false",
    "sweep.methods": "sa_init,sa_landmark,dtcsr",
    "sweep.lambdas": "0.0",
    "sweep.seeds": "0,1,2,3,4",
}

# small linear settings vs. large-dataset settings for the neural model
ARCH_DEFAULTS = {
    LINEAR: {"train.tau": "0.1", "train.lr": "0.1", "train.weight_decay": "0.0",
             "train.batch_size": "128", "train.epochs": "100"},
    FEEDFORWARD: {"train.tau": "0.01", "train.lr": "0.01", "train.weight_decay": "0.0001",
                  "train.batch_size": "128", "train.epochs": "100"},
}

METHOD_LABELS = {"sa_init": "SA Init State", "sa_landmark": "SA Landmarking"}


class ConfigError(ValueError):
    pass


class Config(dict):
    """String-valued flat config with typed getters."""

    def _raw(self, key, default):
        if key in self:
            return self[key]
        if default is not None:
            return str(default)
        raise ConfigError(f"missing config key {key!r}")

    def get_str(self, key, default=None):
        return self._raw(key, default)

    def get_int(self, key, default=None):
        return int(self._raw(key, default))

    def get_float(self, key, default=None):
        return float(self._raw(key, default))

    def get_bool(self, key, default=None):
        val = self._raw(key, default).strip().lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {val!r}")

    def get_list(self, key, conv=str, default=None):
        raw = self._raw(key, default)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list")
        return [conv(s) for s in items]


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def read_config_file(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return {str(k): str(v) for k, v in json.loads(text).items()}
    return parse_config_text(text, str(path))


def resolve_config(config_path=None, seed=None, overrides=()):
    file_vals = read_config_file(config_path) if config_path else {}
    over = parse_config_text("\n".join(overrides), "<overrides>")
    if seed is not None:
        over.setdefault("seed", str(seed))
    arch = over.get("model.arch", file_vals.get("model.arch", DEFAULTS["model.arch"]))
    if arch not in ARCH_DEFAULTS:
        raise ConfigError(f"unknown model.arch {arch!r}")
    cfg = Config(DEFAULTS)
    cfg.update(ARCH_DEFAULTS[arch])
    cfg.update(file_vals)
    cfg.update(over)
    return cfg


def write_resolved(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(dict(sorted(cfg.items())), fh, indent=2)
        fh.write("\n")


def train_config(cfg, **changes) -> TrainConfig:
    kw = dict(
        lam=cfg.get_float("train.lambda"), tau=cfg.get_float("train.tau"),
        learning_rate=cfg.get_float("train.lr"), weight_decay=cfg.get_float("train.weight_decay"),
        batch_size=cfg.get_int("train.batch_size"), epochs=cfg.get_int("train.epochs"),
        loss_mode=cfg.get_str("train.loss_mode"), table_mode=cfg.get_str("train.table_mode"),
        optimizer=cfg.get_str("train.optimizer"), beta1=cfg.get_float("train.beta1"),
        beta2=cfg.get_float("train.beta2"), eps=cfg.get_float("train.eps"),
        seed=cfg.get_int("train.seed", cfg.get_int("seed")), record_time=cfg.get_bool("train.record_time"))
    kw.update(changes)
    return TrainConfig(**kw)


def new_model(cfg, feature_dim, horizon, seed):
    return init_params(cfg.get_str("model.arch"), feature_dim, horizon,
                       hidden=cfg.get_int("model.hidden"), seed=seed)


# ---------------------------------------------------------------------------
# data sources

def rw_config(cfg, n=None, seed=None) -> RwConfig:
    """Generator config; the intercept is calibrated (once, cached in ``cfg``) if not given."""
    dim, horizon = cfg.get_int("gen.dim"), cfg.get_int("gen.horizon")
    if "gen.a" in cfg:
        a = np.array(cfg.get_list("gen.a", float))
    else:
        a = default_coefficients(dim, cfg.get_int("gen.a_seed", cfg.get_int("seed")))
    if "gen.b" not in cfg:
        b = calibrate_intercept(dim, horizon, a, cfg.get_float("gen.censoring"),
                                seed=cfg.get_int("gen.pilot_seed", cfg.get_int("seed")))
        cfg["gen.b"] = repr(b)
    return RwConfig(cfg.get_int("gen.n") if n is None else n, dim, horizon, a, cfg.get_float("gen.b"),
                    cfg.get_int("gen.seed", cfg.get_int("seed")) if seed is None else seed)


def _uses_generator(cfg):
    return "data.path" not in cfg


def _split_spec(cfg):
    default = "fresh" if _uses_generator(cfg) else "holdout:0.2"
    spec = cfg.get_str("sweep.split", default)
    kind, _, arg = spec.partition(":")
    if kind == "fresh":
        if not _uses_generator(cfg):
            raise ConfigError("split 'fresh' needs a generator source (no data.path)")
        return kind, None
    if kind == "holdout":
        return kind, float(arg or 0.2)
    if kind == "kfold":
        return kind, int(arg or 5)
    raise ConfigError(f"unknown split {spec!r}")


def _subsample(ds, pool, size, seed):
    if size is None or size >= len(pool):
        return ds.subset(sorted(pool))
    pick = np.random.Generator(np.random.PCG64(seed)).choice(len(pool), size, replace=False)
    return ds.subset(sorted(int(pool[i]) for i in pick))


def make_split(cfg, size, seed, seed_index):
    """(train, test) datasets for one sweep cell."""
    kind, arg = _split_spec(cfg)
    if kind == "fresh":
        train = generate_random_walk(rw_config(cfg, n=size, seed=seed))
        return train, fixed_test_set(cfg)
    full = load_dataset(cfg.get_str("data.path")) if not _uses_generator(cfg) else \
        generate_random_walk(rw_config(cfg))
    perm = np.random.Generator(np.random.PCG64(cfg.get_int("seed"))).permutation(len(full))
    if kind == "holdout":
        n_test = int(round(arg * len(full)))
        test_idx, pool = perm[:n_test], perm[n_test:]
    else:
        folds = np.array_split(perm, arg)
        k = seed_index % arg
        test_idx = folds[k]
        pool = np.concatenate([f for i, f in enumerate(folds) if i != k])
    test = load_dataset(cfg.get_str("data.test_path")) if "data.test_path" in cfg else \
        full.subset(sorted(test_idx))
    return _subsample(full, pool, size, seed), test


_TEST_CACHE = {}


def fixed_test_set(cfg):
    if "data.test_path" in cfg:
        return load_dataset(cfg.get_str("data.test_path"))
    rw = rw_config(cfg, n=cfg.get_int("gen.test_n"), seed=cfg.get_int("gen.test_seed"))
    key = json.dumps(rw.to_dict())
    if key not in _TEST_CACHE:
        _TEST_CACHE[key] = generate_random_walk(rw)
    return _TEST_CACHE[key]


def _sizes(cfg):
    if "sweep.sizes" not in cfg:
        return [None]
    return [None if s == "all" else int(s) for s in cfg.get_list("sweep.sizes")]


def methods(cfg):
    """Expand ``sweep.methods`` into (label, loss_mode, lambda) triples."""
    out = []
    for m in cfg.get_list("sweep.methods"):
        if m == "sa_init":
            out.append((METHOD_LABELS[m], "init_state", 1.0))
        elif m == "sa_landmark":
            out.append((METHOD_LABELS[m], "landmarking", 1.0))
        elif m == "dtcsr":
            for lam in cfg.get_list("sweep.lambdas", float):
                out.append((f"DTCSR({lam!r})", "dtcsr", lam))
        else:
            raise ConfigError(f"unknown method {m!r}")
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _mean_std(vals):
    vals = [v for v in vals if v is not None]
    if not vals:
        return None, None
    return float(np.mean(vals)), float(np.std(vals))


# ---------------------------------------------------------------------------
# commands; each returns a process exit status

def cmd_generate(cfg, out):
    out = Path(out)
    rw = rw_config(cfg)
    ds = generate_random_walk(rw)
    write_resolved(cfg, out)
    save_dataset(ds, out / "dataset.jsonl")
    with open(out / "rw_config.json", "w", encoding="utf-8") as fh:
        json.dump(rw.to_dict(), fh, indent=2)
        fh.write("\n")
    st = dataset_stats(ds)
    log.info("generated n=%d dim=%d H=%d max_t=%d censored=%.3f", st.n, st.feature_dim,
             st.horizon, st.max_duration, st.censoring_fraction)
    return 0


def cmd_train(cfg, out):
    out = Path(out)
    ds = load_dataset(cfg.get_str("data.path"))
    eval_ds = load_dataset(cfg.get_str("eval.data")) if "eval.data" in cfg else None
    tcfg = train_config(cfg)
    write_resolved(cfg, out)
    model = new_model(cfg, ds.feature_dim, ds.horizon, tcfg.seed)
    theta, train_log, state = fit(ds, model, tcfg, eval_ds)
    save_checkpoint(state, out / "checkpoint.json", tcfg)
    train_log.to_csv(out / "train_log.csv")
    log.info("trained %d epochs, final loss %.6g", len(train_log), train_log.records[-1].loss)
    return 0


def cmd_evaluate(cfg, out):
    out = Path(out)
    state = load_checkpoint(cfg.get_str("eval.checkpoint"))
    ds = load_dataset(cfg.get_str("eval.data"))
    report = evaluate(state.theta, ds)
    write_resolved(cfg, out)
    report.to_json(out / "report.json")
    report.bs_to_csv(out / "bs_curve.csv")
    log.info("CI=%s IBS=%.6g (%d comparable pairs)", report.ci, report.ibs, report.n_pairs_used)
    return 0


def cmd_compare(cfg, out):
    out = Path(out)
    seeds = cfg.get_list("sweep.seeds", int)
    sizes = _sizes(cfg)
    meths = methods(cfg)
    if _uses_generator(cfg):
        rw_config(cfg, n=1, seed=0)  # calibrate once before the sweep
    write_resolved(cfg, out)
    rows, failed = [], 0
    for size in sizes:
        for si, seed in enumerate(seeds):
            try:
                train, test = make_split(cfg, size, seed, si)
            except Exception as exc:  # recorded per cell, the sweep goes on
                for label, _, _ in meths:
                    rows.append([label, size or "all", seed, None, None, 0, f"split: {exc}"])
                failed += len(meths)
                continue
            for label, mode, lam in meths:
                try:
                    tcfg = train_config(cfg, loss_mode=mode, lam=lam, seed=seed)
                    model = new_model(cfg, train.feature_dim, max(train.horizon, test.horizon), seed)
                    theta, _, _ = fit(train, model, tcfg)
                    rep = evaluate(theta, test)
                    rows.append([label, size or len(train), seed, rep.ci, rep.ibs,
                                 rep.n_pairs_used, ""])
                except Exception as exc:
                    log.error("cell %s size=%s seed=%s failed: %s", label, size, seed, exc)
                    rows.append([label, size or "all", seed, None, None, 0, repr(exc)])
                    failed += 1
                log.info("%s size=%s seed=%s CI=%s", label, rows[-1][1], seed, rows[-1][3])
    write_csv(out / "results.csv", ["method", "size", "seed", "ci", "ibs", "n_pairs", "error"], rows)
    agg = []
    for label, _, _ in meths:
        for size in dict.fromkeys(r[1] for r in rows if r[0] == label):
            cell = [r for r in rows if r[0] == label and r[1] == size and not r[6]]
            ci_m, ci_s = _mean_std([r[3] for r in cell])
            ibs_m, ibs_s = _mean_std([r[4] for r in cell])
            agg.append([label, size, len(cell), ci_m, ci_s, ibs_m, ibs_s])
    write_csv(out / "summary.csv",
              ["method", "size", "n_ok", "ci_mean", "ci_std", "ibs_mean", "ibs_std"], agg)
    return 1 if failed else 0


def ablate_tau(cfg):
    """Train one model per (tau, seed); return per-tau hazard samples and scores."""
    taus = cfg.get_list("sweep.taus", float)
    seeds = cfg.get_list("sweep.seeds", int)
    if len(seeds) < 2:
        raise ConfigError("tau ablation needs at least two seeds")
    size = _sizes(cfg)[0]
    test = None
    results = {}
    for tau in taus:
        samples, cis, ibss = [], [], []
        for si, seed in enumerate(seeds):
            train, split_test = make_split(cfg, size, seed, si)
            if test is None:
                test = split_test
            tcfg = train_config(cfg, tau=tau, seed=seed, loss_mode="dtcsr")
            model = new_model(cfg, train.feature_dim, max(train.horizon, test.horizon), seed)
            theta, _, _ = fit(train, model, tcfg)
            samples.append(window_hazards(theta, test))
            rep = evaluate(theta, test)
            cis.append(rep.ci)
            ibss.append(rep.ibs)
            log.info("tau=%s seed=%s CI=%s IBS=%.4f", tau, seed, rep.ci, rep.ibs)
        delta, mean_delta = variability_delta(np.stack(samples))
        results[tau] = {"delta": delta, "mean_delta": mean_delta, "ci": cis, "ibs": ibss}
    return results


def cmd_ablate_tau(cfg, out):
    out = Path(out)
    if _uses_generator(cfg):
        rw_config(cfg, n=1, seed=0)
    write_resolved(cfg, out)
    results = ablate_tau(cfg)
    write_csv(out / "delta_samples.csv", ["tau", "delta"],
              [[tau, float(v)] for tau, r in results.items() for v in r["delta"]])
    write_csv(out / "delta_summary.csv", ["tau", "mean_delta", "n_entries"],
              [[tau, r["mean_delta"], r["delta"].size] for tau, r in results.items()])
    rows = []
    for tau, r in results.items():
        ci_m, ci_s = _mean_std(r["ci"])
        ibs_m, ibs_s = _mean_std(r["ibs"])
        rows.append([tau, ci_m, ci_s, ibs_m, ibs_s])
    write_csv(out / "scores.csv", ["tau", "ci_mean", "ci_std", "ibs_mean", "ibs_std"], rows)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "ablate-tau": cmd_ablate_tau,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="deeptcsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value file or resolved_config.json")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("overrides", nargs="*", metavar="key=value")
    return parser


def main(argv=None):
    parser = build_parser()
    # overrides may also follow options, which plain parse_args rejects
    args, extra = parser.parse_known_args(argv)
    bad = [e for e in extra if e.startswith("-") or "=" not in e]
    if bad:
        parser.error(f"unrecognized arguments: {' '.join(bad)}")
    args.overrides = list(args.overrides) + extra
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.config, args.seed, args.overrides)
        return COMMANDS[args.command](cfg, args.out)
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
