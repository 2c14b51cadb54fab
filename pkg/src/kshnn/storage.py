"""On-disk bundles: a JSON manifest plus flat little-endian float64 blobs.

A bundle is a directory::

    manifest.json        # UTF-8, sorted keys; lists every blob with shape and sha256
    <name>.f64           # raw '<f8' bytes, C order

Bundles are written to a temporary sibling and renamed into place, so a reader
never sees a half-written bundle. Nothing time-dependent goes into a bundle;
identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dvr import Grid, StateCoefficients
from .energynet import EnergyNet, QuadraticEnergy, EnergyModel
from .trajectory import TrajectoryDataset
from .training import AdamState

FORMAT = "kshnn-bundle"
FORMAT_VERSION = 1


class BundleError(RuntimeError):
    pass


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_bundle(path: str | Path, kind: str, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        blobs = {}
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name], dtype="<f8")
            raw = a.tobytes(order="C")
            (tmp / f"{name}.f64").write_bytes(raw)
            blobs[name] = {"file": f"{name}.f64", "shape": list(a.shape), "dtype": "<f8", "sha256": _sha256(raw)}
        manifest = {"format": FORMAT, "format_version": FORMAT_VERSION, "kind": kind, "blobs": blobs, "meta": meta}
        (tmp / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def read_bundle(path: str | Path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise BundleError(f"{path} is not a bundle (missing manifest.json)")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise BundleError(f"{path}: unknown format {manifest.get('format')!r}")
    if kind is not None and manifest.get("kind") != kind:
        raise BundleError(f"{path}: expected a {kind} bundle, found {manifest.get('kind')!r}")
    arrays = {}
    for name, info in manifest["blobs"].items():
        raw = (path / info["file"]).read_bytes()
        if _sha256(raw) != info["sha256"]:
            raise BundleError(f"{path}: checksum mismatch for blob {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(info["shape"]).astype(np.float64)
    return manifest, arrays


def content_hash(path: str | Path) -> str:
    """Hash of a bundle's manifest, which pins every blob by checksum."""
    return _sha256((Path(path) / "manifest.json").read_bytes())


# datasets

def save_dataset(path: str | Path, ds: TrajectoryDataset) -> Path:
    arrays = {"q": ds.q, "p": ds.p, "q_dot": ds.q_dot, "p_dot": ds.p_dot, "t": ds.t}
    return write_bundle(path, "dataset", arrays, {"grid": ds.grid.to_dict(), "metadata": ds.metadata,
                                                  "n_samples": len(ds)})


def load_dataset(path: str | Path) -> TrajectoryDataset:
    manifest, a = read_bundle(path, "dataset")
    meta = manifest["meta"]
    return TrajectoryDataset(Grid.from_dict(meta["grid"]), a["q"], a["p"], a["q_dot"], a["p_dot"], a["t"],
                             meta.get("metadata", {}))


# checkpoints

@dataclass
class Checkpoint:
    net: EnergyModel
    adam_state: AdamState | None
    meta: dict

    @property
    def grid(self) -> Grid:
        return Grid.from_dict(self.meta["grid"])


def save_checkpoint(path: str | Path, net: EnergyModel, grid: Grid, adam_state: AdamState | None = None,
                    config: dict | None = None, dataset_hash: str | None = None,
                    extra: dict | None = None) -> Path:
    meta = {"grid": grid.to_dict(), "config": config or {}, "dataset_hash": dataset_hash,
            "tool_version": __version__, **(extra or {})}
    if isinstance(net, QuadraticEnergy):
        meta["model"] = {"kind": "quadratic", "norm_shift": net.norm_shift, "offset": net.offset}
        return write_bundle(path, "checkpoint", {"H": net.H}, meta)
    meta["model"] = {"kind": "energynet", "activation": net.activation, "hidden": net.hidden,
                     "n_basis": net.n_basis, "b3": net.b3}
    arrays = {f"param.{k}": v for k, v in net.params().items() if k != "b3"}
    if adam_state is not None:
        meta["adam_step_count"] = adam_state.step_count
        arrays.update({f"adam_m.{k}": v for k, v in adam_state.first_moment.items()})
        arrays.update({f"adam_v.{k}": v for k, v in adam_state.second_moment.items()})
    return write_bundle(path, "checkpoint", arrays, meta)


def load_checkpoint(path: str | Path) -> Checkpoint:
    manifest, a = read_bundle(path, "checkpoint")
    meta = manifest["meta"]
    model = meta["model"]
    if model["kind"] == "quadratic":
        return Checkpoint(QuadraticEnergy(a["H"], model["norm_shift"], model["offset"]), None, meta)
    p = {k.split(".", 1)[1]: v for k, v in a.items() if k.startswith("param.")}
    net = EnergyNet(p["W1"], p["b1"], p["W2"], p["b2"], p["w3"], model["b3"], model["activation"])
    state = None
    if "adam_step_count" in meta:
        m = {k.split(".", 1)[1]: v for k, v in a.items() if k.startswith("adam_m.")}
        v = {k.split(".", 1)[1]: v for k, v in a.items() if k.startswith("adam_v.")}
        state = AdamState(m, v, int(meta["adam_step_count"]))
    return Checkpoint(net, state, meta)


# orbital trajectories (exact references, propagated states)

def save_orbital_trajectory(path: str | Path, grid: Grid, times: Sequence[float],
                            orbitals: Sequence[Sequence[StateCoefficients]], extra_arrays: dict | None = None,
                            meta: dict | None = None) -> Path:
    U = np.array([[s.vector for s in row] for row in orbitals])  # (T, M, 2n)
    arrays = {"t": np.asarray(times, dtype=np.float64), "orbitals": U, **(extra_arrays or {})}
    return write_bundle(path, "orbital-trajectory", arrays, {"grid": grid.to_dict(), **(meta or {})})


def load_orbital_trajectory(path: str | Path) -> tuple[Grid, np.ndarray, list[list[StateCoefficients]], dict, dict]:
    manifest, a = read_bundle(path, "orbital-trajectory")
    meta = manifest["meta"]
    times = a.pop("t")
    U = a.pop("orbitals")
    orbitals = [[StateCoefficients.from_vector(u, float(t)) for u in row] for row, t in zip(U, times)]
    return Grid.from_dict(meta["grid"]), times, orbitals, a, meta


# plot data

def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path: str | Path, header: Sequence[str], rows, comment: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        if comment is not None:
            f.write(f"# {comment}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(encoding="utf-8") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, np.array([[float(v) for v in row] for row in reader])
