"""Command-line driver.

All commands of one experiment share a run directory (``--out``)::

    dataset/  reference/  checkpoint/     bundles (see :mod:`kshnn.storage`)
    loss_history.csv  trajectory.csv  mse.csv  potential*.csv  levels.csv
    manifest.<command>.json               version, resolved config, seed, hashes, timings

so ``generate``, ``train``, ``propagate`` and ``extract-potential`` chain
without extra path flags. Any module error gives a nonzero exit status.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import EXPERIMENTS, load_config, set_path
from .dvr import Grid, build_grid
from .dynamics import (DensityTrajectory, PropagationConfig, PropagationDivergedError, SampledReference,
                       propagate)
from .ho import build_ho_dataset, ho_eigenstate, superposition_state
from .potential import PotentialProfile, extract_ks_potential, fix_gauge, network_energy, xc_potential
from .storage import (content_hash, dumps_json, load_checkpoint, load_dataset, load_orbital_trajectory,
                      save_checkpoint, save_dataset, save_orbital_trajectory, write_bundle, write_csv)
from .training import TrainConfig, TrainingDivergedError, train
from .twoelectron import (ExactTrajectory, dataset_from_trajectory, exact_ks_potential, external_potential_2e,
                          hartree_potential, orbital_time_derivative, run_exact_trajectory)


class CommandError(RuntimeError):
    pass


# helpers

def _grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    return build_grid(g["x_min"], g["x_max"], g["n_points"])


def _resolve(args: argparse.Namespace, experiment: str | None = None) -> dict:
    cfg = load_config(args.config, experiment or getattr(args, "experiment", None))
    set_path(cfg, "seed", args.seed)
    set_path(cfg, "out", args.out)
    return cfg


def _data_config(cfg: dict) -> dict:
    """Config echo stored inside bundles: everything except where outputs go."""
    return {k: v for k, v in cfg.items() if k != "out"}


def _write_manifest(out: Path, command: str, cfg: dict, timings: dict, **extra) -> Path:
    manifest = {"command": command, "tool_version": __version__, "config": cfg, "seed": cfg.get("seed"),
                "timings_s": {k: round(v, 3) for k, v in timings.items()}, **extra}
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"manifest.{command}.json"
    path.write_text(dumps_json(manifest), encoding="utf-8")
    return path


def _parse_gauge(spec: str) -> tuple[str, dict]:
    """``point:X``, ``mean:THRESHOLD`` or ``none``."""
    kind, _, arg = spec.partition(":")
    if kind == "point":
        return "point", {"anchor_x": float(arg or 0.0)}
    if kind in ("mean", "mean-over-region"):
        return "mean-over-region", {"threshold": float(arg or 1e-3)}
    if kind == "none":
        return "none", {}
    raise CommandError(f"bad gauge spec {spec!r}; use point:X, mean:THRESHOLD or none")


def _gauge_comment(profile: PotentialProfile) -> str:
    return "gauge " + json.dumps(profile.gauge.to_dict(), sort_keys=True)


def _ho_states(cfg: dict, spec: str, grid: Grid):
    """Initial-state provider ``t -> [orbitals]`` for a HO state spec."""
    kind, _, arg = spec.partition(":")
    if kind == "superposition":
        amps = np.asarray(cfg["amplitudes"], dtype=np.complex128)
        return lambda t: [superposition_state(amps, t, grid)]
    if kind == "eigen":
        n = int(arg or 0)
        return lambda t: [ho_eigenstate(n, t, grid)]
    raise CommandError(f"bad state spec {spec!r}; use superposition or eigen:N")


def _reference_2e(path: Path):
    grid, times, orbitals, extras, meta = load_orbital_trajectory(path)
    # the single KS orbital is doubly occupied
    states = [[row[0], row[0]] for row in orbitals]
    return grid, times, states, extras, meta


def _trajectory_csvs(out: Path, traj: DensityTrajectory, grid: Grid) -> None:
    header = ["t"] + [f"n(x={float(x)!r})" for x in grid.points]
    write_csv(out / "trajectory.csv", header, ([t, *n] for t, n in zip(traj.times, traj.densities)))
    if traj.mse:
        write_csv(out / "mse.csv", ["t", "mse"], zip(traj.times, traj.mse))


# commands

def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    set_path(cfg, "dataset.eigenstates", args.eigenstates)
    set_path(cfg, "dataset.n_timestamps", args.timestamps)
    set_path(cfg, "dataset.t_end", args.t_end)
    out = Path(cfg["out"])
    grid = _grid(cfg)
    t0 = time.perf_counter()
    d = cfg["dataset"]
    if cfg["experiment"] == "2e":
        traj = run_exact_trajectory(grid, d["dt"], d["t_end"], d["sample_stride"], store_psi=args.store_psi)
        ds = dataset_from_trajectory(traj)
        extras = {"density": traj.densities, "current": traj.currents, "energy": traj.energies,
                  "norm": traj.norms}
        save_orbital_trajectory(out / "reference", grid, traj.times, [[o] for o in traj.orbitals], extras,
                                {**traj.metadata, "max_exchange_asymmetry": traj.max_asymmetry})
        if args.store_psi:
            arrays = {}
            for k, psi in enumerate(traj.psi):
                arrays[f"re.{k:06d}"] = psi.values.real
                arrays[f"im.{k:06d}"] = psi.values.imag
            write_bundle(out / "psi", "wavefunctions", {"t": traj.times, **arrays}, {"grid": grid.to_dict()})
        diag = {"norm_drift": float(np.max(np.abs(traj.norms - traj.norms[0]))),
                "energy_drift": float(np.max(np.abs(traj.energies - traj.energies[0]))),
                "max_exchange_asymmetry": traj.max_asymmetry}
    else:
        ds = build_ho_dataset(d["eigenstates"], grid, d["t_start"], d["t_end"], d["n_timestamps"])
        norms = 0.5 * np.sum(ds.q ** 2 + ds.p ** 2, axis=1)
        diag = {"max_norm_error": float(np.max(np.abs(norms - 1.0)))}
    save_dataset(out / "dataset", ds)
    elapsed = time.perf_counter() - t0
    dhash = content_hash(out / "dataset")
    summary = {"samples": len(ds), "grid": grid.to_dict(), **diag}
    print(json.dumps(summary, sort_keys=True))
    _write_manifest(out, "generate", cfg, {"generate": elapsed}, dataset_hash=dhash, summary=summary)
    return 0


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig.from_dict({**cfg.get("train", {}), "seed": cfg["seed"]})


def cmd_train(args: argparse.Namespace) -> int:
    out_hint = Path(args.out) if args.out else None
    ds_path = Path(args.dataset) if args.dataset else (out_hint or Path("runs/ho")) / "dataset"
    ds = load_dataset(ds_path)
    cfg = _resolve(args, ds.metadata.get("source", "ho"))
    # the dataset, not the config file, decides what was generated
    cfg["grid"] = ds.grid.to_dict()
    cfg["dataset"].update({k: v for k, v in ds.metadata.items() if k in cfg["dataset"]})
    set_path(cfg, "train.max_epochs", args.epochs)
    set_path(cfg, "train.target_loss", args.target_loss)
    set_path(cfg, "train.activation", args.activation)
    set_path(cfg, "train.learning_rate", args.learning_rate)
    set_path(cfg, "train.batch_size", args.batch_size)
    set_path(cfg, "train.hidden", args.hidden)
    out = Path(cfg["out"])
    tcfg = _train_config(cfg)
    dhash = content_hash(ds_path)

    def progress(rec: dict) -> None:
        print(json.dumps(rec, sort_keys=True), flush=True)

    t0 = time.perf_counter()
    try:
        res = train(ds, tcfg, progress=progress)
    except TrainingDivergedError as exc:
        write_csv(out / "loss_history.csv", ["epoch", "loss"], exc.history)
        _write_manifest(out, "train", cfg, {"train": time.perf_counter() - t0}, dataset_hash=dhash,
                        error=str(exc))
        raise
    elapsed = time.perf_counter() - t0
    save_checkpoint(out / "checkpoint", res.net, ds.grid, res.adam_state, _data_config(cfg), dhash,
                    {"train_config": tcfg.to_dict(), "final_loss": res.history[-1][1],
                     "epochs": len(res.history)})
    write_csv(out / "loss_history.csv", ["epoch", "loss"], res.history)
    _write_manifest(out, "train", cfg, {"train": elapsed}, dataset_hash=dhash,
                    final_loss=res.history[-1][1], epochs=len(res.history),
                    stopped_on_target=res.stopped_on_target)
    return 0


def _load_ckpt(args: argparse.Namespace):
    path = Path(args.checkpoint) if args.checkpoint else Path(args.out or "runs/ho") / "checkpoint"
    ck = load_checkpoint(path)
    experiment = ck.meta.get("config", {}).get("experiment", "ho")
    if experiment == "ho-scaling":
        experiment = "ho"
    cfg = _resolve(args, experiment)
    for key in ("grid", "dataset", "train"):
        if key in ck.meta.get("config", {}):
            cfg[key] = ck.meta["config"][key]
    if ck.net.n_basis != ck.grid.n_points:
        raise CommandError("checkpoint network does not match its grid")
    return ck, cfg


def cmd_propagate(args: argparse.Namespace) -> int:
    ck, cfg = _load_ckpt(args)
    set_path(cfg, "propagation.dt", args.dt)
    set_path(cfg, "propagation.n_steps", args.n_steps)
    set_path(cfg, "propagation.record_stride", args.record_stride)
    set_path(cfg, "propagation.calibration_interval", args.calibrate_every)
    if args.calibrate_every == 0:
        cfg["propagation"]["calibration_interval"] = None
    out = Path(cfg["out"])
    grid = ck.grid
    pcfg = PropagationConfig(**cfg["propagation"])
    if cfg["experiment"] == "2e":
        ref_path = Path(args.reference) if args.reference else out / "reference"
        rgrid, times, states, _, _ = _reference_2e(ref_path)
        if rgrid != grid:
            raise CommandError("reference and checkpoint grids differ")
        reference = SampledReference(times, states)
        initial = reference(0.0)
    else:
        reference = _ho_states(cfg, args.state or "superposition", grid)
        initial = reference(0.0)
    t0 = time.perf_counter()
    try:
        traj = propagate(ck.net, initial, pcfg, grid, reference)
    except PropagationDivergedError as exc:
        _trajectory_csvs(out, exc.trajectory, grid)
        _write_manifest(out, "propagate", cfg, {"propagate": time.perf_counter() - t0},
                        dataset_hash=ck.meta.get("dataset_hash"), error=str(exc))
        raise
    elapsed = time.perf_counter() - t0
    _trajectory_csvs(out, traj, grid)
    norms = np.asarray(traj.norms)
    summary = {"records": len(traj.times), "max_norm_deviation": float(np.max(np.abs(norms - norms[0])))}
    if traj.mse:
        summary["max_mse"] = float(np.max(traj.mse))
        summary["t_max_mse"] = float(traj.times[int(np.argmax(traj.mse))])
    print(json.dumps(summary, sort_keys=True))
    _write_manifest(out, "propagate", cfg, {"propagate": elapsed}, dataset_hash=ck.meta.get("dataset_hash"),
                    summary=summary)
    return 0


def _write_potential(path: Path, profile: PotentialProfile, extra_cols: dict | None = None,
                     comment: str | None = None) -> None:
    cols = {"x": profile.grid.points, "v": profile.values, "valid": profile.validity.astype(int),
            **(extra_cols or {})}
    write_csv(path, list(cols), zip(*cols.values()), comment or _gauge_comment(profile))


def _ho_levels(net, grid: Grid, count: int) -> list[tuple[int, float, float]]:
    e = [network_energy(net, ho_eigenstate(n, 0.0, grid)) for n in range(count)]
    return [(n, e[n], e[n] - e[0]) for n in range(count)]


def cmd_extract_potential(args: argparse.Namespace) -> int:
    ck, cfg = _load_ckpt(args)
    set_path(cfg, "gauge", args.gauge)
    if args.times:
        cfg["times"] = [float(t) for t in args.times.split(",")]
    out = Path(cfg["out"])
    grid = ck.grid
    mode, gopts = _parse_gauge(cfg["gauge"])
    t0 = time.perf_counter()
    if cfg["experiment"] == "2e":
        ref_path = Path(args.reference) if args.reference else out / "reference"
        rgrid, times, orbitals, extras, _ = load_orbital_trajectory(ref_path)
        if rgrid != grid:
            raise CommandError("reference and checkpoint grids differ")
        traj = ExactTrajectory(rgrid, times, [row[0] for row in orbitals], extras["density"],
                               extras["current"], extras["energy"], extras["norm"], 0.0)
        v_ext = PotentialProfile.from_function(grid, external_potential_2e)
        for t in cfg["times"]:
            k = int(np.argmin(np.abs(times - t)))
            phi, n = traj.orbitals[k], traj.densities[k]
            v_h = hartree_potential(n, grid)
            gopts_k = {**gopts, "density": n} if mode == "mean-over-region" else gopts
            v_ks = fix_gauge(extract_ks_potential(ck.net, phi, grid), mode, **gopts_k)
            v_xc = fix_gauge(xc_potential(extract_ks_potential(ck.net, phi, grid), v_ext, v_h), mode, **gopts_k)
            exact = exact_ks_potential(phi, orbital_time_derivative(traj, k), grid)
            x_exact = fix_gauge(xc_potential(exact, v_ext, v_h), mode, **gopts_k)
            _write_potential(out / f"potential_t{times[k]:g}.csv", v_ks,
                             {"v_ext": v_ext.values, "v_H": v_h.values, "v_xc": v_xc.values,
                              "v_xc_exact": x_exact.values, "valid_exact": x_exact.validity.astype(int)},
                             f"{_gauge_comment(v_ks)} t {float(times[k])!r}")
    else:
        state = _ho_states(cfg, args.state or "eigen:0", grid)(0.0)[0]
        v = fix_gauge(extract_ks_potential(ck.net, state, grid), mode, **gopts)
        _write_potential(out / "potential.csv", v, {"v_exact": 0.5 * grid.points ** 2})
        count = int(cfg.get("dataset", {}).get("eigenstates", 15))
        write_csv(out / "levels.csv", ["n", "energy", "shifted"], _ho_levels(ck.net, grid, count))
    _write_manifest(out, "extract-potential", cfg, {"extract": time.perf_counter() - t0},
                    dataset_hash=ck.meta.get("dataset_hash"))
    return 0


def max_deviation(profile: PotentialProfile, half_width: float = 4.0) -> float:
    """Largest |v - x^2/2| over valid points with |x| <= half_width."""
    x = profile.grid.points
    mask = (np.abs(x) <= half_width) & profile.validity
    return float(np.max(np.abs(profile.values[mask] - 0.5 * x[mask] ** 2)))


def cmd_scaling(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "ho-scaling")
    if args.counts:
        cfg["eigenstate_counts"] = [int(m) for m in args.counts.split(",")]
    set_path(cfg, "train.max_epochs", args.epochs)
    set_path(cfg, "train.target_loss", args.target_loss)
    set_path(cfg, "gauge", args.gauge)
    out = Path(cfg["out"])
    grid = _grid(cfg)
    d = cfg["dataset"]
    mode, gopts = _parse_gauge(cfg["gauge"])
    rows, timings, failures = [], {}, {}
    for M in cfg["eigenstate_counts"]:
        t0 = time.perf_counter()
        try:
            ds = build_ho_dataset(M, grid, d["t_start"], d["t_end"], d["n_timestamps"])
            res = train(ds, _train_config(cfg))
            v = fix_gauge(extract_ks_potential(res.net, ho_eigenstate(0, 0.0, grid), grid), mode, **gopts)
            _write_potential(out / f"potential_M{M}.csv", v, {"v_exact": 0.5 * grid.points ** 2})
            rows.append((M, res.history[-1][1], max_deviation(v)))
            print(json.dumps({"M": M, "final_loss": rows[-1][1], "max_deviation": rows[-1][2]}), flush=True)
        except Exception as exc:  # noqa: BLE001 - report per M, keep going
            failures[str(M)] = f"{type(exc).__name__}: {exc}"
            print(f"M={M} failed: {failures[str(M)]}", file=sys.stderr)
        timings[f"M{M}"] = time.perf_counter() - t0
    write_csv(out / "scaling_summary.csv", ["M", "final_loss", "max_deviation_abs_x_le_4"], rows)
    _write_manifest(out, "scaling", cfg, timings, failures=failures,
                    seed_policy="every M trains from the same seed")
    return 1 if failures else 0


def cmd_verify(args: argparse.Namespace) -> int:
    from .verify import run_all

    results = run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kshnn", description="Learn Kohn-Sham energy functionals from "
                                     "orbital trajectories; propagate and extract potentials.")
    parser.add_argument("--version", action="version", version=f"kshnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML/JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="run directory")

    p = sub.add_parser("generate", help="build a training dataset")
    common(p)
    p.add_argument("--experiment", choices=[e for e in EXPERIMENTS if e != "ho-scaling"])
    p.add_argument("--eigenstates", type=int)
    p.add_argument("--timestamps", type=int)
    p.add_argument("--t-end", type=float)
    p.add_argument("--store-psi", action="store_true", help="also save full 2D wavefunctions (large)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit an energy network to a dataset")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--target-loss", type=float)
    p.add_argument("--activation", choices=["tanh", "softplus"])
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("propagate", help="RK4 dynamics under a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--reference", help="2e reference trajectory bundle")
    p.add_argument("--state", help="HO initial state: superposition or eigen:N")
    p.add_argument("--dt", type=float)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--record-stride", type=int)
    p.add_argument("--calibrate-every", type=int, help="reset to the reference every N steps (0 = never)")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("extract-potential", help="KS potential from a checkpoint's Hessian diagonal")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--reference")
    p.add_argument("--state", help="HO state: eigen:N (default eigen:0) or superposition")
    p.add_argument("--times", help="2e snapshot times, comma separated")
    p.add_argument("--gauge", help="point:X, mean:THRESHOLD or none")
    p.set_defaults(func=cmd_extract_potential)

    p = sub.add_parser("scaling", help="train and extract for several eigenstate counts")
    common(p)
    p.add_argument("--counts", help="comma-separated eigenstate counts")
    p.add_argument("--epochs", type=int)
    p.add_argument("--target-loss", type=float)
    p.add_argument("--gauge")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("verify", help="run the fast oracle suite")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except Exception as exc:  # noqa: BLE001 - any module error maps to a nonzero exit
        print(f"kshnn {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
