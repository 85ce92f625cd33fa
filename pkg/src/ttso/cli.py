"""Command-line entry point: validated run configuration, pipelines, reports.

The run configuration is a single JSON document with one section per
subsystem. Loading rejects unknown keys and reports violations with the full
key path. One top-level seed drives data generation, initialization,
minibatching, and mixture base noise through namespaced derivation, so two
runs of the same configuration produce byte-identical outputs.

Exit codes: 0 success, 1 configuration/input error, 2 numerical or I/O
failure.
"""

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .data import (
    DomainShift,
    SynthConfig,
    export_csv_dataset,
    gen_synthetic,
    load_csv_dataset,
    moderate_shift_preset,
    standardize_domain,
)
from .encoders import Architecture, load_checkpoint, save_checkpoint
from .errors import ConfigurationError, NumericalError, TTSOError
from .evalbench import (
    BenchSettings,
    config_hash,
    evaluate_accuracy,
    run_lodo,
    train_probe,
    train_representation,
)
from .seeding import derive_seed
from .sla import QuadraticBundle, SLAConfig, sla_run, solve_restricted


# --- configuration schema ---------------------------------------------------

class Opt:
    """One configurable leaf: default value, type kind, optional bounds."""

    def __init__(self, default, kind, choices=None, minimum=None, length=None):
        self.default = default
        self.kind = kind
        self.choices = choices
        self.minimum = minimum
        self.length = length

    def validate(self, value, path):
        kind = self.kind
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        elif kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigurationError(f"{path}: expected a number, got {value!r}")
            value = float(value)
        elif kind == "bool":
            if not isinstance(value, bool):
                raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        elif kind == "string":
            if not isinstance(value, str):
                raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        elif kind == "step_size":
            if value != "schedule":
                if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                    raise ConfigurationError(
                        f"{path}: expected 'schedule' or a positive number, got {value!r}"
                    )
                value = float(value)
        elif kind in ("int_list", "number_list", "string_list"):
            if not isinstance(value, list):
                raise ConfigurationError(f"{path}: expected a list, got {value!r}")
            elem = {"int_list": "int", "number_list": "number", "string_list": "string"}[kind]
            value = [Opt(None, elem).validate(v, f"{path}[{i}]") for i, v in enumerate(value)]
        else:
            raise AssertionError(f"unknown option kind {kind}")
        if self.choices is not None and value not in self.choices:
            raise ConfigurationError(f"{path}: must be one of {self.choices}, got {value!r}")
        if self.minimum is not None:
            seq = value if isinstance(value, list) else [value]
            for v in seq:
                if v < self.minimum:
                    raise ConfigurationError(f"{path}: must be >= {self.minimum}, got {v!r}")
        if self.length is not None and len(value) != self.length:
            raise ConfigurationError(f"{path}: expected {self.length} entries, got {len(value)}")
        return value


SHIFT_SCHEMA = {
    "amplitude_scale": Opt(1.0, "number", minimum=0.0),
    "frequency_offset": Opt(0.0, "number"),
    "corr_noise": Opt(0.0, "number", minimum=0.0),
    "baseline_offset": Opt(0.0, "number"),
}

SCHEMA = {
    "seed": Opt(0, "int"),
    "output_dir": Opt("runs/out", "string"),
    "architecture": {
        "kind": Opt("mlp", "string", choices=("linear", "mlp", "dilated_conv")),
        "input_window_len": Opt(32, "int", minimum=1),
        "n_features": Opt(3, "int", minimum=1),
        "repr_dim": Opt(8, "int", minimum=1),
        "hidden_dims": Opt([32], "int_list", minimum=1),
        "n_layers": Opt(4, "int", minimum=1),
        "kernel_size": Opt(3, "int", minimum=1),
        "dilation_base": Opt(2, "int", minimum=1),
    },
    "loss": {
        "aug_kind": Opt("jitter", "string", choices=("jitter", "scale", "shift")),
        "aug_magnitude": Opt(0.2, "number", minimum=0.0),
        "lam": Opt(0.2, "number", minimum=0.0),
    },
    "perturb": {
        "mode": Opt("gmm_reparam", "string", choices=("gmm_reparam", "direct")),
        "n_components": Opt(2, "int", minimum=1),
        "c1": Opt(2.0, "number", minimum=0.0),
        "c2": Opt(7.5, "number", minimum=0.0),
        "rho": Opt([10.0, 10.0, 10.0, 10.0], "number_list", minimum=0.0, length=4),
        "sigma_init": Opt(0.4, "number", minimum=0.0),
        "t3": Opt(2, "int", minimum=0),
        "eta_delta_inner": Opt(0.02, "number", minimum=0.0),
    },
    "group": {
        "tau": Opt(0.6, "number", minimum=1e-12),
        "lambdas": Opt([5.0, 5.0, 1.0, 5.0], "number_list", minimum=0.0, length=4),
        "eta_q_inner": Opt(0.2, "number", minimum=0.0),
        "t2": Opt(1, "int", minimum=1),
        "tau_ball": Opt(True, "bool"),
        "squared_hinge": Opt(False, "bool"),
        "inner_step": Opt("ascent", "string", choices=("ascent", "descent")),
    },
    "cutplane": {
        "lambda_plane": Opt(10.0, "number", minimum=1e-12),
        "max_planes": Opt(64, "int", minimum=1),
        "epsilon_h": Opt(0.05, "number", minimum=1e-15),
    },
    "sla": {
        "t1_total": Opt(100, "int", minimum=0),
        "warmup": Opt(1, "int", minimum=0),
        "plane_cadence": Opt(10, "int", minimum=1),
        "epsilon_stat": Opt(1e-10, "number", minimum=0.0),
        "eta_theta": Opt(0.05, "step_size"),
        "eta_q": Opt(0.05, "step_size"),
        "eta_delta": Opt(0.005, "step_size"),
        "batch_size": Opt(8, "int", minimum=1),
        "update_order": Opt("jacobi", "string", choices=("jacobi", "gauss_seidel")),
        "align_only_f1": Opt(False, "bool"),
    },
    "data": {
        "source": Opt("synthetic", "string", choices=("synthetic", "csv")),
        "synthetic": {
            "n_domains": Opt(4, "int", minimum=2),
            "n_classes": Opt(3, "int", minimum=2),
            "samples_per_domain": Opt(120, "int", minimum=1),
            "series_length": Opt(32, "int", minimum=2),
            "n_features": Opt(3, "int", minimum=1),
            "preset": Opt("moderate", "string", choices=("none", "moderate")),
            "shifts": Opt([], "shift_list"),
            "waves_per_class": Opt(2, "int", minimum=1),
            "phase_jitter": Opt(0.15, "number", minimum=0.0),
            "amp_jitter": Opt(0.1, "number", minimum=0.0),
            "sample_noise": Opt(0.5, "number", minimum=0.0),
        },
        "csv": {
            "directory": Opt("", "string"),
            "manifest": Opt("", "string"),
        },
    },
    "eval": {
        "methods": Opt(["ttso", "erm"], "string_list"),
        "seeds": Opt([0, 1, 2, 3, 4], "int_list"),
        "probe_epochs": Opt(300, "int", minimum=0),
        "probe_lr": Opt(0.5, "number", minimum=0.0),
        "groupdro_eta": Opt(0.05, "number", minimum=0.0),
        "finetune_gamma": Opt(1.0, "number", minimum=0.0),
        "finetune_epochs": Opt(50, "int", minimum=0),
        "finetune_lr": Opt(0.05, "number", minimum=0.0),
    },
}


def _validate_section(data, schema, path):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'}: expected an object")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError(f"unknown key(s): {', '.join(where + u for u in unknown)}")
    out = {}
    for key, opt in schema.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(opt, dict):
            out[key] = _validate_section(data.get(key, {}), opt, sub)
        elif opt.kind == "shift_list":
            raw = data.get(key, opt.default)
            if not isinstance(raw, list):
                raise ConfigurationError(f"{sub}: expected a list of shift objects")
            out[key] = [_validate_section(entry, SHIFT_SCHEMA, f"{sub}[{i}]")
                        for i, entry in enumerate(raw)]
        else:
            out[key] = opt.validate(data.get(key, opt.default), sub)
    return out


class RunConfig:
    """Fully defaulted, validated configuration tree."""

    def __init__(self, tree):
        self.tree = tree
        if tree["group"]["t2"] != 1:
            raise ConfigurationError(
                "group.t2: only a single inner maximization step is supported; "
                "the feasibility surrogate is convex per anchor only for t2=1"
            )
        if tree["data"]["source"] == "csv":
            csv_cfg = tree["data"]["csv"]
            if not csv_cfg["directory"] or not csv_cfg["manifest"]:
                raise ConfigurationError("data.csv: directory and manifest are required")
        if tree["sla"]["t1_total"] > 0 and tree["sla"]["warmup"] >= tree["sla"]["t1_total"]:
            raise ConfigurationError("sla.warmup: must be smaller than sla.t1_total")

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.tree == other.tree

    def __getitem__(self, key):
        return self.tree[key]

    def canonical_json(self):
        return json.dumps(self.tree, indent=2, sort_keys=True) + "\n"

    @property
    def seed(self):
        return self.tree["seed"]

    def architecture(self) -> Architecture:
        a = self.tree["architecture"]
        return Architecture(
            kind=a["kind"], input_window_len=a["input_window_len"],
            n_features=a["n_features"], repr_dim=a["repr_dim"],
            hidden_dims=tuple(a["hidden_dims"]), n_layers=a["n_layers"],
            kernel_size=a["kernel_size"], dilation_base=a["dilation_base"],
        )

    def synth_config(self) -> SynthConfig:
        s = self.tree["data"]["synthetic"]
        if s["shifts"]:
            shifts = tuple(DomainShift(**entry) for entry in s["shifts"])
        elif s["preset"] == "moderate":
            shifts = moderate_shift_preset(s["n_domains"])
        else:
            shifts = ()
        return SynthConfig(
            n_domains=s["n_domains"], n_classes=s["n_classes"],
            samples_per_domain=s["samples_per_domain"], series_length=s["series_length"],
            n_features=s["n_features"], seed=derive_seed(self.seed, "data"),
            shifts=shifts, waves_per_class=s["waves_per_class"],
            phase_jitter=s["phase_jitter"], amp_jitter=s["amp_jitter"],
            sample_noise=s["sample_noise"],
        )

    def dataset(self):
        if self.tree["data"]["source"] == "synthetic":
            return gen_synthetic(self.synth_config())
        csv_cfg = self.tree["data"]["csv"]
        return load_csv_dataset(csv_cfg["directory"], csv_cfg["manifest"])

    def bench_settings(self) -> BenchSettings:
        t = self.tree
        return BenchSettings(
            arch=self.architecture(),
            aug_kind=t["loss"]["aug_kind"], aug_magnitude=t["loss"]["aug_magnitude"],
            lam=t["loss"]["lam"], tau=t["group"]["tau"],
            group_lambdas=tuple(t["group"]["lambdas"]),
            perturb_mode=t["perturb"]["mode"], n_components=t["perturb"]["n_components"],
            c1=t["perturb"]["c1"], c2=t["perturb"]["c2"], rho=tuple(t["perturb"]["rho"]),
            sigma_init=t["perturb"]["sigma_init"],
            t1_total=t["sla"]["t1_total"], warmup=t["sla"]["warmup"],
            plane_cadence=t["sla"]["plane_cadence"], epsilon_h=t["cutplane"]["epsilon_h"],
            epsilon_stat=t["sla"]["epsilon_stat"],
            eta_theta=t["sla"]["eta_theta"], eta_q=t["sla"]["eta_q"],
            eta_delta=t["sla"]["eta_delta"], t3=t["perturb"]["t3"],
            eta_delta_inner=t["perturb"]["eta_delta_inner"],
            eta_q_inner=t["group"]["eta_q_inner"], batch_size=t["sla"]["batch_size"],
            lambda_plane=t["cutplane"]["lambda_plane"], max_planes=t["cutplane"]["max_planes"],
            inner_sign=1.0 if t["group"]["inner_step"] == "ascent" else -1.0,
            align_only_f1=t["sla"]["align_only_f1"], update_order=t["sla"]["update_order"],
            groupdro_eta=t["eval"]["groupdro_eta"],
            probe_epochs=t["eval"]["probe_epochs"], probe_lr=t["eval"]["probe_lr"],
        )


def parse_config(raw: dict) -> RunConfig:
    return RunConfig(_validate_section(raw, SCHEMA, ""))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)


# --- output writing ---------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows, columns):
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            cells.append(repr(float(v)) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def trace_rows(trace):
    return [
        {
            "t": r.t, "F": float(r.f_value), "f1": float(r.f1_value), "h": float(r.h_value),
            "grad_norm_sq": float(r.grad_norm_sq), "n_planes": r.n_planes,
            "eta_theta": float(r.eta_theta), "eta_q": float(r.eta_q),
            "eta_delta": float(r.eta_delta),
        }
        for r in trace.records
    ]


TRACE_COLUMNS = ["t", "F", "f1", "h", "grad_norm_sq", "n_planes",
                 "eta_theta", "eta_q", "eta_delta"]


def write_report(out_dir, config: RunConfig = None, report_rows=None, report_columns=None,
                 report_json=None, trace=None):
    """Write report.csv / report.json / trace.csv / config-echo.json, each
    atomically (temp file then rename). Returns the written paths."""
    out_dir = Path(out_dir)
    paths = {}
    try:
        if report_rows is not None:
            paths["report_csv"] = out_dir / "report.csv"
            _atomic_write(paths["report_csv"], _csv_text(report_rows, report_columns))
        if report_json is not None:
            paths["report_json"] = out_dir / "report.json"
            _atomic_write(paths["report_json"],
                          json.dumps(report_json, indent=2, sort_keys=True) + "\n")
        if trace is not None:
            paths["trace_csv"] = out_dir / "trace.csv"
            _atomic_write(paths["trace_csv"], _csv_text(trace_rows(trace), TRACE_COLUMNS))
        if config is not None:
            paths["config_echo"] = out_dir / "config-echo.json"
            _atomic_write(paths["config_echo"], config.canonical_json())
    except OSError as exc:
        raise NumericalError(f"cannot write outputs under {out_dir}: {exc}") from None
    return paths


# --- pipelines ---------------------------------------------------------------

def cmd_gen_data(config: RunConfig, out_dir):
    dataset = gen_synthetic(config.synth_config())
    manifest = export_csv_dataset(dataset, Path(out_dir) / "data")
    write_report(out_dir, config=config)
    print(f"wrote {len(dataset.domains)} domain CSVs; manifest at {manifest}")
    return 0


def cmd_train(config: RunConfig, out_dir):
    dataset = config.dataset()
    settings = config.bench_settings()
    method = config["eval"]["methods"][0]
    std_windows = [standardize_domain(d.windows) for d in dataset.domains]
    seed = derive_seed(config.seed, "train")

    trace = None
    if method == "ttso":
        from .evalbench import _ttso_train

        params, final_q, trace = _ttso_train(settings.arch, std_windows, settings, seed)
        print(f"final domain weights: {np.round(final_q, 4).tolist()}")
    else:
        params = train_representation(method, settings.arch, std_windows, settings, seed)

    ckpt_dir = Path(out_dir) / "checkpoint"
    save_checkpoint(params, ckpt_dir)
    summary = {
        "method": method,
        "n_params": params.n_params,
        "domains": dataset.domain_ids,
        "config_hash": config_hash(settings, dataset, config["eval"]["seeds"], config.seed),
    }
    if trace is not None:
        summary["status"] = trace.status
        summary["iterations"] = len(trace.records)
        summary["final_planes"] = trace.records[-1].n_planes if trace.records else 0
    write_report(out_dir, config=config, report_json=summary, trace=trace)
    print(f"checkpoint at {ckpt_dir}; method={method}")
    return 0


def cmd_eval(config: RunConfig, out_dir, checkpoint, target=None):
    dataset = config.dataset()
    settings = config.bench_settings()
    params = load_checkpoint(checkpoint)
    std = [(d.domain_id, standardize_domain(d.windows), d.labels) for d in dataset.domains]
    seed = derive_seed(config.seed, "eval")

    rows = []
    if target is not None:
        ids = [d for d, _, _ in std]
        if target not in ids:
            raise ConfigurationError(f"--target {target!r} not in dataset domains {ids}")
        held = ids.index(target)
        sources = [std[i] for i in range(len(std)) if i != held]
        train_x = np.concatenate([w for _, w, _ in sources])
        train_y = np.concatenate([l for _, _, l in sources])
        head = train_probe(params, train_x, train_y, dataset.n_classes,
                           epochs=settings.probe_epochs, lr=settings.probe_lr, seed=seed)
        acc = evaluate_accuracy(params, head, std[held][1], std[held][2])
        rows.append({"domain": target, "accuracy": float(acc), "role": "held_out"})
    else:
        train_x = np.concatenate([w for _, w, _ in std])
        train_y = np.concatenate([l for _, _, l in std])
        head = train_probe(params, train_x, train_y, dataset.n_classes,
                           epochs=settings.probe_epochs, lr=settings.probe_lr, seed=seed)
        for domain_id, windows, labels in std:
            acc = evaluate_accuracy(params, head, windows, labels)
            rows.append({"domain": domain_id, "accuracy": float(acc), "role": "in_domain"})

    report = {r["domain"]: r["accuracy"] for r in rows}
    report_json = {"per_domain": report, "mean_accuracy": float(np.mean(list(report.values())))}
    write_report(out_dir, config=config, report_rows=rows,
                 report_columns=["domain", "accuracy", "role"], report_json=report_json)
    for r in rows:
        print(f"{r['domain']}: {r['accuracy']:.4f} ({r['role']})")
    return 0


def cmd_lodo(config: RunConfig, out_dir):
    dataset = config.dataset()
    settings = config.bench_settings()
    seeds = config["eval"]["seeds"]
    methods = config["eval"]["methods"]

    reports = {}
    for method in methods:
        reports[method] = run_lodo(dataset, method, settings, seeds, base_seed=config.seed)

    rows, per_method = [], {}
    for method, rep in reports.items():
        for domain_id, mean, std, per_seed in rep.row_iter():
            rows.append({
                "method": method, "target_domain": domain_id,
                "accuracy_mean": float(mean), "accuracy_std": float(std),
            })
        rows.append({
            "method": method, "target_domain": "AVG",
            "accuracy_mean": float(rep.mean_accuracy), "accuracy_std": 0.0,
        })
        per_method[method] = {
            "per_domain_mean": rep.per_domain_mean,
            "per_domain_std": rep.per_domain_std,
            "per_seed": rep.per_seed,
            "mean_accuracy": rep.mean_accuracy,
        }

    report_json = {
        "config_hash": next(iter(reports.values())).config_hash,
        "seeds": list(seeds),
        "target_domains": list(dataset.domain_ids),
        "methods": per_method,
        "mean_accuracy": {m: reports[m].mean_accuracy for m in reports},
    }
    if "ttso" in reports and "erm" in reports:
        gaps = {
            d: reports["ttso"].per_domain_mean[d] - reports["erm"].per_domain_mean[d]
            for d in dataset.domain_ids
        }
        report_json["ttso_minus_erm"] = {
            "per_domain": gaps,
            "mean": reports["ttso"].mean_accuracy - reports["erm"].mean_accuracy,
            "domains_not_worse": sum(1 for g in gaps.values() if g >= 0),
        }
    write_report(out_dir, config=config, report_rows=rows,
                 report_columns=["method", "target_domain", "accuracy_mean", "accuracy_std"],
                 report_json=report_json)
    for m in reports:
        print(f"{m}: mean accuracy {reports[m].mean_accuracy:.4f}")
    return 0


TOY_SETUP = dict(
    t1_total=200, warmup=1, plane_cadence=10, epsilon_h=0.05, epsilon_stat=1e-12,
    eta_theta=0.005, eta_q=0.005, eta_delta=0.005, lambda_plane=10.0, max_planes=64,
)


def cmd_toy_quadratic(out_dir, seed=3):
    """Reference solver run on the quadratic bundle, plus the restricted-
    optimum sweep. Fails (exit 2) if the optima are not monotone."""
    bundle = QuadraticBundle(seed=seed)
    cfg = SLAConfig(**TOY_SETUP, seed=seed, record_plane_snapshots=True)
    result = sla_run(cfg, bundle)
    optima_rows = []
    prev = -np.inf
    monotone = True
    for t, planes in result.plane_snapshots:
        value, _ = solve_restricted(bundle, planes, bundle.init_state(), tol=1e-8)
        monotone = monotone and value >= prev - 1e-7
        prev = value
        optima_rows.append({"t": t, "n_planes": len(planes), "restricted_optimum": float(value)})
    summary = {
        "status": result.trace.status,
        "n_planes": len(result.planes),
        "plane_epochs": len(optima_rows),
        "restricted_optima_monotone": bool(monotone),
        "restricted_optima": [r["restricted_optimum"] for r in optima_rows],
    }
    out_dir = Path(out_dir)
    write_report(out_dir, report_json=summary, trace=result.trace)
    _atomic_write(out_dir / "optima.csv",
                  _csv_text(optima_rows, ["t", "n_planes", "restricted_optimum"]))
    print(f"plane epochs: {len(optima_rows)}; monotone: {monotone}")
    if not monotone:
        raise NumericalError("restricted optima are not monotone")
    return 0


def cmd_selftest():
    from .selftest import run_selftest

    failures = run_selftest(print_fn=print)
    if failures:
        raise NumericalError(f"{failures} selftest check(s) failed")
    return 0


# --- entry point -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser():
    parser = _Parser(prog="ttso", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, needs_config in (
        ("gen-data", True), ("train", True), ("eval", True), ("lodo", True),
        ("toy-quadratic", False), ("selftest", False),
    ):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
        if name == "eval":
            p.add_argument("--checkpoint", required=True, help="checkpoint directory")
            p.add_argument("--target", default=None, help="held-out domain id")
        if name == "toy-quadratic":
            p.add_argument("--seed", type=int, default=3)
    return parser


def run_command(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "toy-quadratic":
            return cmd_toy_quadratic(args.out or "runs/toy-quadratic", seed=args.seed)
        if args.command == "selftest":
            return cmd_selftest()
        config = load_config(args.config)
        out_dir = args.out or config["output_dir"]
        if args.command == "gen-data":
            return cmd_gen_data(config, out_dir)
        if args.command == "train":
            return cmd_train(config, out_dir)
        if args.command == "eval":
            return cmd_eval(config, out_dir, args.checkpoint, target=args.target)
        if args.command == "lodo":
            return cmd_lodo(config, out_dir)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except TTSOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
