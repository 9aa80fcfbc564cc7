"""Command-line entry point: ``infrbm <subcommand> ...``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
Every output file gets a sibling ``<output>.manifest.json`` recording the
argv, the fully resolved config, input digests and timing; passing that
manifest back as ``--config`` reproduces the run.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .cd import cd_train
from .config import ConfigError, config_keys, default_config, load_config
from .data import binarize, fset_bytes, load_fset, read_idx, split
from .evaluation import AisConfig, avg_test_loglik, evaluate_ais, extract_features, schedule_preset, softmax_classify
from .exact import exact_log_partition
from .fw import fw_train
from .model import as_rbm, from_standard_rbm, load, to_bytes, to_standard_rbm

SUBCOMMANDS = ("train-fw", "train-cd", "eval-ais", "eval-exact", "classify", "convert-data")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _epilog():
    return "config keys ([section] key = value):\n  " + "\n  ".join(config_keys()) + (
        "\n\nenvironment: FRBM_THREADS caps worker threads (same as --threads)")


def build_parser():
    p = _Parser(prog="infrbm", description="Frank-Wolfe infinite RBMs, CD baselines and likelihood evaluation.",
                epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads (default: FRBM_THREADS or unlimited)")
    sub = p.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="key = value config file, or a run manifest to replay")
        sp.add_argument("--seed", type=int, help="override the seed of the relevant config section")
        return sp

    sp = add("convert-data", "IDX images (+labels) -> binarized FSET dataset(s)")
    sp.add_argument("--images", required=True)
    sp.add_argument("--labels")
    sp.add_argument("--out", required=True)
    sp.add_argument("--valid-out", help="write a validation split here (needs data.validation_count > 0)")
    sp.add_argument("--threshold", type=int)
    sp.add_argument("--validation-count", type=int)

    for name, what in (("train-fw", "Frank-Wolfe"), ("train-cd", "contrastive divergence")):
        sp = add(name, f"train a model by {what}")
        sp.add_argument("--data", required=True)
        sp.add_argument("--valid", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--report", required=True)
        sp.add_argument("--init", help="warm-start model (FRBM)")

    sp = add("eval-ais", "estimate log Z and test log-likelihood by AIS")
    sp.add_argument("--model", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--schedule", help="preset (standard | uniform:<n> | single) or a file of inverse temperatures")
    sp.add_argument("--runs", type=int)
    sp.add_argument("--base-data", help="dataset for the base-model marginals (default: --test)")
    sp.add_argument("--out", required=True)

    sp = add("eval-exact", "exact log Z and test log-likelihood by enumeration")
    sp.add_argument("--model", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out")

    sp = add("classify", "softmax regression on hidden activations vs. raw pixels")
    sp.add_argument("--model", required=True)
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out", required=True)
    return p


# -- io helpers ------------------------------------------------------------------

def _atomic_write(path, payload):
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _write_manifest(outputs, argv, command, config, seed, inputs, started, extra=None):
    manifest = {
        "subcommand": command,
        "argv": list(argv),
        "config": config.as_dict(),
        "seed": seed,
        "inputs": {k: {"path": v, "sha256": _digest(v)} for k, v in inputs.items() if v},
        "version": __version__,
        "wall_time_seconds": time.perf_counter() - started,
        "outputs": {os.path.basename(p): _digest(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    for p in outputs:
        _atomic_write(p + ".manifest.json", text)
    return manifest


# -- subcommands -------------------------------------------------------------------

SEED_SECTION = {"train-fw": "fw", "train-cd": "cd", "eval-ais": "ais", "convert-data": "data",
                "eval-exact": None, "classify": None}


def _resolve(args):
    section = SEED_SECTION[args.command]
    config = load_config(args.config, section) if args.config else default_config()
    if args.seed is not None and section is not None:
        key = "split_seed" if section == "data" else "seed"
        config = config.replace(section, **{key: args.seed})
    return config


def cmd_convert(args, config):
    changes = {}
    if args.threshold is not None:
        changes["threshold"] = args.threshold
    if args.validation_count is not None:
        changes["validation_count"] = args.validation_count
    if changes:
        config = config.replace("data", **changes)
    ds = config.data
    labels = read_idx(args.labels) if args.labels else None
    data = binarize(read_idx(args.images), ds.threshold, labels)
    outputs = [args.out]
    if args.valid_out:
        if ds.validation_count <= 0:
            raise ValueError("--valid-out needs data.validation_count > 0")
        train, valid = split(data, ds.validation_count, ds.split_seed)
        _atomic_write(args.out, fset_bytes(train))
        _atomic_write(args.valid_out, fset_bytes(valid))
        outputs.append(args.valid_out)
    else:
        _atomic_write(args.out, fset_bytes(data))
    inputs = {"images": args.images, "labels": args.labels}
    print(f"wrote {', '.join(outputs)} (seed {ds.split_seed})")
    return config, ds.split_seed, inputs, outputs, None


def cmd_train_fw(args, config):
    data, valid = load_fset(args.data), load_fset(args.valid)
    init = load(args.init) if args.init else None
    mix, report = fw_train(data, valid, config.fw, init)
    _atomic_write(args.out, to_bytes(mix))
    _atomic_write(args.report, report.to_csv())
    for flag in report.flags:
        print(f"warning: {flag}", file=sys.stderr)
    print(f"selected {mix.n_atoms} units after {len(report.records)} iterations (seed {config.fw.seed})")
    inputs = {"data": args.data, "valid": args.valid, "init": args.init}
    extra = {"selected_units": mix.n_atoms, "stopped_early": report.stopped_early}
    return config, config.fw.seed, inputs, [args.out, args.report], extra


def cmd_train_cd(args, config):
    data, valid = load_fset(args.data), load_fset(args.valid)
    init = None
    if args.init:
        init = to_standard_rbm(load(args.init))
        config = config.replace("cd", hidden_units=init.hidden_dim)
    model, report = cd_train(data, valid, config.cd, init)
    _atomic_write(args.out, to_bytes(from_standard_rbm(model)))
    _atomic_write(args.report, report.to_csv())
    print(f"trained {model.hidden_dim} hidden units, selected epoch {report.selected} (seed {config.cd.seed})")
    inputs = {"data": args.data, "valid": args.valid, "init": args.init}
    return config, config.cd.seed, inputs, [args.out, args.report], None


def _read_schedule(path):
    with open(path, encoding="utf-8") as f:
        return np.array([float(x) for x in f.read().replace(",", " ").split()])


def cmd_eval_ais(args, config):
    schedule_file = args.schedule if args.schedule and os.path.isfile(args.schedule) else None
    changes = {}
    if args.schedule is not None and schedule_file is None:
        changes["schedule"] = args.schedule
    if args.runs is not None:
        changes["runs"] = args.runs
    if changes:
        config = config.replace("ais", **changes)
    a = config.ais
    betas = _read_schedule(schedule_file) if schedule_file else schedule_preset(a.schedule)
    model = as_rbm(load(args.model))
    test = load_fset(args.test)
    base = load_fset(args.base_data) if args.base_data else test
    est = evaluate_ais(model, test, AisConfig(betas, a.runs, a.base_bias_mode, a.seed), base)
    header = ("log_z_mean", "log_z_std", "error_bar_3std", "avg_test_loglik", "n_test", "runs", "temperatures")
    row = (est.log_z_mean, est.log_z_std, est.error_bar, est.avg_test_loglik, est.n_test, a.runs, int(betas.size))
    _atomic_write(args.out, _csv(header, [row]))
    print(f"log Z = {est.log_z_mean:.6f} +/- {est.error_bar:.6f} (3 std); "
          f"avg test log-lik = {est.avg_test_loglik:.6f} (seed {a.seed})")
    inputs = {"model": args.model, "test": args.test, "schedule": schedule_file, "base_data": args.base_data}
    return config, a.seed, inputs, [args.out], None


def cmd_eval_exact(args, config):
    mix = load(args.model)
    test = load_fset(args.test)
    log_z = exact_log_partition(mix)
    ll = avg_test_loglik(mix, test, log_z)
    print(f"log_z,avg_test_loglik,n_test\n{log_z!r},{ll!r},{test.count}")
    outputs = []
    if args.out:
        _atomic_write(args.out, _csv(("log_z", "avg_test_loglik", "n_test"), [(log_z, ll, test.count)]))
        outputs.append(args.out)
    return config, None, {"model": args.model, "test": args.test}, outputs, None


def cmd_classify(args, config):
    model = as_rbm(load(args.model))
    train, test = load_fset(args.train), load_fset(args.test)
    for name, d in (("train", train), ("test", test)):
        if d.labels is None:
            raise ValueError(f"--{name} dataset has no labels")
    ds = config.data
    rows = []
    for kind, ftr, fte in (("hidden", extract_features(model, train), extract_features(model, test)),
                           ("raw", train.as_float(), test.as_float())):
        err = softmax_classify(ftr, train.labels, fte, test.labels, ds.classify_reg, ds.classify_iters)
        rows.append((kind, ftr.shape[1], err))
        print(f"{kind} features ({ftr.shape[1]}): test error {err:.4f}")
    _atomic_write(args.out, _csv(("features", "dim", "error"), rows))
    return config, None, {"model": args.model, "train": args.train, "test": args.test}, [args.out], None


COMMANDS = {"convert-data": cmd_convert, "train-fw": cmd_train_fw, "train-cd": cmd_train_cd,
            "eval-ais": cmd_eval_ais, "eval-exact": cmd_eval_exact, "classify": cmd_classify}


def _thread_limit(args):
    if args.threads is not None:
        n = args.threads
    elif os.environ.get("FRBM_THREADS"):
        try:
            n = int(os.environ["FRBM_THREADS"])
        except ValueError:
            raise UsageError(f"FRBM_THREADS must be an integer, got {os.environ['FRBM_THREADS']!r}") from None
    else:
        return None
    if n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def dispatch(argv=None):
    """Run one subcommand; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return 0 if not exc.code else 1
        if args.command is None:
            raise UsageError(parser.format_usage())
        threads = _thread_limit(args)
        started = time.perf_counter()
        config = _resolve(args)
        with threadpool_limits(limits=threads):
            config, seed, inputs, outputs, extra = COMMANDS[args.command](args, config)
        if outputs:
            _write_manifest(outputs, argv, args.command, config, seed, inputs, started, extra)
        return 0
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, MemoryError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything unexpected is a runtime failure too
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
