"""Command-line harness for the figure/table-class experiments.

Subcommands: erank-scan, toy-diag, train, theorem-check, rfm-solve, replay.
Every run writes CSV/JSON outputs plus rendered figures into --out, together
with a manifest (fully resolved configuration, seed, version, per-output
checksums). Re-running a manifest through ``replay`` reproduces the CSV and
JSON outputs byte for byte.

Options can also come from a flat key = value config file (--config); an
explicit command-line flag always wins over the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, report
from .features import (
    OperatorSpec,
    basis_matrix,
    halfcell_spectral_gap,
    init_model,
    kernel_ga,
    uniform_grid,
)
from .linalg import effective_rank, sym_eigendecomp
from .problems import PROBLEMS, error_metrics
from .training import (
    DivergenceError,
    TrainConfig,
    diag_toy_run,
    gd_train,
    make_spectrum,
    rfm_solve,
)

THREADS_ENV = "ERANKLAB_THREADS"


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    """Full round-trip formatting for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _atomic_write(path: Path, data: str):
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(data)
    os.replace(tmp, path)


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(c) for c in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: Path, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: dict, outputs):
    payload = {
        "tool": "eranklab",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "outputs": {name: _sha256(out / name) for name in sorted(outputs)},
    }
    write_json(out / "manifest.json", payload)


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_jobs, limit))


def _value_tag(v) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


# ---------------------------------------------------------------------------
# Option schema: name -> (converter, default, help)
# ---------------------------------------------------------------------------


def _parse_values(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v != ""]


def _parse_mp(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _parse_epoch_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


_COMMON_MODEL_OPTS = {
    "mp": (_parse_mp, (1,), "PoU cells, per-dimension comma list (a single value is broadcast)"),
    "rm": (float, 1.0, "inner-weight initialization half-range R_m"),
    "jn": (int, None, "neurons per cell (default: m // prod(mp))"),
    "n": (int, None, "grid points per dimension"),
    "activation": (str, "tanh", "activation: tanh, sin or relu3"),
    "pou_kind": (str, "b", "construction function kind: a (characteristic) or b (sine blend)"),
    "seed": (int, 0, "RNG seed"),
}

_SCHEMAS = {
    "erank-scan": {
        "axis": (str, "mp", "scan axis: mp, rm or m"),
        "values": (_parse_values, None, "comma-separated axis values"),
        "m": (int, 1024, "total hidden neurons"),
        "n_equals_m": (_parse_bool, False, "tie grid size to M along an m scan"),
        **_COMMON_MODEL_OPTS,
        "n": (int, 256, "grid points"),
        "pou_kind": (str, "a", "construction function kind"),
        "figures": (_parse_bool, True, "render figures"),
    },
    "toy-diag": {
        "spectrum": (str, "geometric", "spectrum kind: geometric, linear or cluster"),
        "n": (int, 64, "system size"),
        "lam_max": (float, 256.0, "largest eigenvalue"),
        "lam_min": (float, 1.0, "smallest eigenvalue"),
        "cluster_size": (int, 4, "copies of lam_max in the cluster spectrum"),
        "lr": (float, 5e-2, "learning rate"),
        "epochs": (int, 100, "gradient-descent epochs"),
        "seed": (int, 0, "seed for the right-hand side"),
        "figures": (_parse_bool, True, "render figures"),
    },
    "train": {
        "problem": (str, None, "problem name: " + ", ".join(sorted(PROBLEMS))),
        **_COMMON_MODEL_OPTS,
        "mode": (str, "full", "trainable parameters: rfm (outer only) or full"),
        "lr": (float, None, "learning rate (default 0.5 / lambda_max of the initial kernel)"),
        "epochs": (int, None, "epochs (default 20000 regression, 50000 PDE)"),
        "gamma": (float, None, "boundary weight (default: problem setting)"),
        "snapshot_epochs": (_parse_epoch_list, (), "extra kernel-snapshot epochs"),
        "figures": (_parse_bool, True, "render figures"),
    },
    "theorem-check": {
        "n": (int, 64, "grid points (even)"),
        "m": (int, 2048, "hidden neurons (even)"),
        "seeds": (int, 20, "number of independent trials"),
        "activation": (str, "tanh", "activation"),
        "seed": (int, 0, "base seed"),
        "figures": (_parse_bool, True, "render figures"),
    },
    "rfm-solve": {
        "problem": (str, None, "linear problem name"),
        **_COMMON_MODEL_OPTS,
        "gamma": (float, None, "boundary weight in the stacked system"),
        "figures": (_parse_bool, True, "render figures"),
    },
}

_DEFAULT_JN = {"erank-scan": None}


def _load_config_file(path: str) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, val = line.split("=", 1)
        elif ":" in line:
            key, val = line.split(":", 1)
        else:
            raise ValueError(f"config line is not key = value: {raw!r}")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _resolve(command: str, args: argparse.Namespace) -> dict:
    schema = _SCHEMAS[command]
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_cfg) - set(schema)
    if unknown:
        raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg = {}
    for key, (conv, default, _help) in schema.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            cfg[key] = conv(flag_val)
        elif key in file_cfg:
            cfg[key] = conv(file_cfg[key])
        else:
            cfg[key] = default
    return cfg


# ---------------------------------------------------------------------------
# Command implementations (replayable: config dict + out dir)
# ---------------------------------------------------------------------------


def _scan_point(cfg: dict, axis: str, value: float):
    mp = cfg["mp"]
    m = cfg["m"]
    rm = cfg["rm"]
    n = cfg["n"]
    if axis == "mp":
        mp = (int(value),)
    elif axis == "rm":
        rm = float(value)
    elif axis == "m":
        m = int(value)
        if cfg["n_equals_m"]:
            n = int(value)
    else:
        raise ValueError(f"unknown scan axis {axis!r}")
    mp_total = int(np.prod(mp))
    jn = cfg["jn"] if cfg["jn"] else m // mp_total
    if jn * mp_total != m:
        raise ValueError(f"M = {m} is not divisible by M_p = {mp_total}")
    model = init_model(
        seed=cfg["seed"],
        domain=(-1.0, 1.0),
        mp=mp if len(mp) > 1 else mp[0],
        jn=jn,
        r_m=rm,
        activation=cfg["activation"],
        kind=cfg["pou_kind"],
    )
    x = uniform_grid(model.partition.domain, n, model.partition)
    dec = sym_eigendecomp(kernel_ga(basis_matrix(model, x, OperatorSpec.identity())))
    return {
        "axis_value": value,
        "erank": effective_rank(dec.eigenvalues),
        "lambda_max": float(dec.eigenvalues[0]),
        "lambda_min": float(dec.eigenvalues[-1]),
        "n": n,
        "m": m,
        "seed": cfg["seed"],
        "eigenvalues": dec.eigenvalues,
    }


def run_erank_scan(cfg: dict, out: Path) -> list[str]:
    values = cfg["values"]
    if not values:
        raise ValueError("no scan values given")
    axis = cfg["axis"]
    with ThreadPoolExecutor(max_workers=_worker_count(len(values))) as pool:
        points = list(pool.map(lambda v: _scan_point(cfg, axis, v), values))
    outputs = ["scan.csv"]
    write_csv(
        out / "scan.csv",
        ["axis_value", "erank", "lambda_max", "lambda_min", "n", "m", "seed"],
        [
            [p["axis_value"], p["erank"], p["lambda_max"], p["lambda_min"], p["n"], p["m"], p["seed"]]
            for p in points
        ],
    )
    for p in points:
        name = f"eigen_{_value_tag(p['axis_value'])}.csv"
        write_csv(out / name, ["index", "eigenvalue"], list(enumerate(p["eigenvalues"])))
        outputs.append(name)
    if cfg["figures"]:
        report.save_erank_scan(axis, [p["axis_value"] for p in points],
                               [p["erank"] for p in points], out / "erank_scan.png")
        report.save_spectra(
            [(f"{axis}={_value_tag(p['axis_value'])}", p["eigenvalues"]) for p in points],
            out / "spectra.png",
        )
        outputs += ["erank_scan.png", "spectra.png"]
    return outputs


def run_toy_diag(cfg: dict, out: Path) -> list[str]:
    lam = make_spectrum(cfg["spectrum"], cfg["n"], cfg["lam_max"], cfg["lam_min"],
                        cfg["cluster_size"])
    rng = np.random.default_rng(cfg["seed"])
    b = rng.standard_normal(cfg["n"])
    result = diag_toy_run(lam, b, cfg["lr"], cfg["epochs"])
    outputs = ["loss.csv", "modes.csv", "summary.json"]
    write_csv(out / "loss.csv", ["epoch", "loss"], list(enumerate(result.losses)))
    write_csv(
        out / "modes.csv",
        ["epoch", "mode_index", "sq_error"],
        [
            [t, i, result.mode_sq[t, i]]
            for t in range(result.mode_sq.shape[0])
            for i in range(result.mode_sq.shape[1])
        ],
    )
    write_json(
        out / "summary.json",
        {
            "spectrum": cfg["spectrum"],
            "erank": result.erank,
            "lambda_max": float(lam[0]),
            "lambda_min": float(lam[-1]),
            "final_loss": result.final_loss,
            "lr": result.lr,
            "epochs": cfg["epochs"],
        },
    )
    if cfg["figures"]:
        report.save_toy_figures(result, out)
        outputs += ["loss.png", "modes.png", "spectrum.png"]
    return outputs


def _build_model(cfg: dict, problem, trainable_inner: bool):
    dim = problem.dim
    mp = cfg["mp"]
    if len(mp) == 1 and dim > 1:
        mp = mp * dim
    if len(mp) != dim:
        raise ValueError(f"--mp needs {dim} entries for {problem.name}, got {mp}")
    mp_total = int(np.prod(mp))
    jn = cfg["jn"] if cfg["jn"] else max(512 // mp_total, 1)
    domain = problem.domain if dim > 1 else problem.domain[0]
    return init_model(
        seed=cfg["seed"],
        domain=domain,
        mp=mp if dim > 1 else mp[0],
        jn=jn,
        r_m=cfg["rm"],
        activation=cfg["activation"],
        kind=cfg["pou_kind"],
        trainable_inner=trainable_inner,
    )


def _make_problem(cfg: dict):
    name = cfg["problem"]
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    problem = PROBLEMS[name]()
    if cfg.get("gamma") is not None:
        problem = type(problem)(**{**problem.__dict__, "gamma": float(cfg["gamma"])})
    if cfg.get("n"):
        problem = type(problem)(
            **{**problem.__dict__, "n_interior": (int(cfg["n"]),) * problem.dim}
        )
    return problem


def run_train(cfg: dict, out: Path) -> list[str]:
    problem = _make_problem(cfg)
    epochs = cfg["epochs"] or (20000 if problem.name == "regression" else 50000)
    model = _build_model(cfg, problem, trainable_inner=(cfg["mode"] == "full"))
    config = TrainConfig(
        epochs=epochs,
        lr=cfg["lr"],
        gamma=cfg["gamma"],
        mode=cfg["mode"],
        seed=cfg["seed"],
        snapshot_epochs=cfg["snapshot_epochs"],
    )
    record = gd_train(model, problem, config)
    outputs = ["loss.csv", "snapshots.csv", "errors.json"]
    sched = sorted(record.metrics)
    rel = {e: record.metrics[e]["rel_l2"] for e in sched}
    write_csv(
        out / "loss.csv",
        ["epoch", "loss", "rel_l2"],
        [[e, record.losses[e], rel.get(e)] for e in range(epochs + 1)],
    )
    write_csv(
        out / "snapshots.csv",
        ["epoch", "erank", "lambda_max", "lambda_min"],
        [[s.epoch, s.erank, s.lambda_max, s.lambda_min] for s in record.snapshots],
    )
    for snap in record.snapshots:
        name = f"eigen_{snap.epoch}.csv"
        write_csv(out / name, ["index", "eigenvalue"], list(enumerate(snap.eigenvalues)))
        outputs.append(name)
    write_json(
        out / "errors.json",
        {**record.metrics[epochs], "final_loss": float(record.losses[-1]), "lr": record.lr},
    )
    if cfg["figures"]:
        report.save_train_figures(record, out)
        outputs += ["loss.png", "kernel_spectra.png"]
        outputs.append(_solution_figure(model, problem, out))
    return outputs


def _solution_figure(model, problem, out: Path) -> str:
    grid = problem.eval_grid()
    pred = model.value(grid)
    exact = problem.exact(grid)
    if problem.dim == 1:
        report.save_solution_1d(grid[:, 0], pred, exact, out / "solution.png")
    else:
        report.save_solution_2d(grid, pred, exact, out / "solution.png")
    return "solution.png"


def run_theorem_check(cfg: dict, out: Path) -> list[str]:
    if cfg["n"] % 2 or cfg["m"] % 2:
        raise ValueError("theorem check needs even N and M")
    seeds = [cfg["seed"] + i for i in range(cfg["seeds"])]
    with ThreadPoolExecutor(max_workers=_worker_count(len(seeds))) as pool:
        gaps = list(
            pool.map(
                lambda s: halfcell_spectral_gap(cfg["n"], cfg["m"], s, cfg["activation"])[:2],
                seeds,
            )
        )
    bound = gaps[0][1]
    rows = [[s, g, bound, int(g <= bound)] for s, (g, _) in zip(seeds, gaps)]
    outputs = ["theorem.csv", "summary.json"]
    write_csv(out / "theorem.csv", ["seed", "gap", "bound", "within_bound"], rows)
    gap_values = [g for g, _ in gaps]
    write_json(
        out / "summary.json",
        {
            "n": cfg["n"],
            "m": cfg["m"],
            "trials": cfg["seeds"],
            "bound": bound,
            "median_gap": float(np.median(gap_values)),
            "max_gap": float(np.max(gap_values)),
            "all_within_bound": bool(np.max(gap_values) <= bound),
        },
    )
    if cfg["figures"]:
        report.save_theorem_gaps(gap_values, bound, out / "gaps.png")
        outputs.append("gaps.png")
    return outputs


def run_rfm_solve(cfg: dict, out: Path) -> list[str]:
    problem = _make_problem(cfg)
    if not problem.operator.is_linear:
        raise ValueError(
            f"{problem.name} is nonlinear; the direct solve only covers linear "
            "operators - use `eranklab train` for gradient-descent training"
        )
    model = _build_model(cfg, problem, trainable_inner=False)
    rfm_solve(model, problem, gamma=cfg["gamma"])
    grid = problem.eval_grid()
    pred = model.value(grid)
    exact = problem.exact(grid)
    outputs = ["solution.csv", "errors.json"]
    coords = [f"x{k}" for k in range(problem.dim)] if problem.dim > 1 else ["x"]
    write_csv(
        out / "solution.csv",
        coords + ["u_pred", "u_exact"],
        [list(grid[i]) + [pred[i], exact[i]] for i in range(grid.shape[0])],
    )
    write_json(out / "errors.json", error_metrics(model, problem, grid))
    if cfg["figures"]:
        if problem.dim == 1:
            report.save_solution_1d(grid[:, 0], pred, exact, out / "solution.png")
        else:
            report.save_solution_2d(grid, pred, exact, out / "solution.png")
        outputs.append("solution.png")
    return outputs


_RUNNERS = {
    "erank-scan": run_erank_scan,
    "toy-diag": run_toy_diag,
    "train": run_train,
    "theorem-check": run_theorem_check,
    "rfm-solve": run_rfm_solve,
}


def run_command(command: str, cfg: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = _RUNNERS[command](cfg, out)
    write_manifest(out, command, cfg, outputs)
    return out


def run_replay(manifest_path, out_dir) -> Path:
    manifest = json.loads(Path(manifest_path).read_text())
    command = manifest["command"]
    if command not in _RUNNERS:
        raise ValueError(f"manifest command {command!r} is not replayable")
    cfg = manifest["config"]
    # JSON round-trips lists for tuples; normalize through the schema.
    schema = _SCHEMAS[command]
    cfg = {k: (schema[k][0](v) if v is not None else None) for k, v in cfg.items()}
    return run_command(command, cfg, out_dir)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eranklab",
        description="Effective-rank experiments for shallow random-feature PDE solvers",
    )
    parser.add_argument("--version", action="version", version=f"eranklab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        p = sub.add_parser(command, help=f"run the {command} experiment")
        for key, (_conv, default, help_text) in schema.items():
            flag = "--" + key.replace("_", "-")
            if key in ("figures",):
                p.add_argument("--no-figures", dest="figures", action="store_false",
                               default=None, help="skip figure rendering")
            elif key in ("n_equals_m",):
                p.add_argument(flag, dest=key, action="store_true", default=None,
                               help=help_text)
            else:
                p.add_argument(flag, dest=key, default=None, metavar="V",
                               help=f"{help_text} (default: {default})")
        p.add_argument("--config", default=None, metavar="FILE",
                       help="flat key = value config file; flags win")
        p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    rp = sub.add_parser("replay", help="re-run a command from its manifest")
    rp.add_argument("manifest", help="path to a manifest.json")
    rp.add_argument("--out", required=True, metavar="DIR", help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            out = run_replay(args.manifest, args.out)
        else:
            cfg = _resolve(args.command, args)
            out = run_command(args.command, cfg, args.out)
    except DivergenceError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {out}/manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
