"""Case orchestration: single runs, parameter sweeps, run manifests."""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, solver
from .config import CaseConfig
from .diagnostics import symmetry_error
from .nodes import NodeType

_FMT = "%.17g"

SWEEP_AXES = ("h", "h1", "h2", "w", "c", "n", "ra")


@dataclass
class RunManifest:
    """What a run produced: config echo, hash, outputs, timings."""

    config: dict
    config_hash: str
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    failure: str | None = None

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")


def run_case(
    config: CaseConfig,
    out_dir=None,
    initial: solver.RunResult | None = None,
) -> tuple[RunManifest, solver.RunResult | None]:
    """Run one case and write snapshot, series, and manifest files.

    On numerical failure the last valid checkpoint and a partial
    manifest with the failure note are still written.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.to_dict(), config.content_hash())
    tic = time.perf_counter()
    try:
        result = solver.run(config, initial=initial)
        failure = None
    except solver.SolverDivergedError as exc:
        result = None
        failure = str(exc)
        if exc.checkpoint is not None:
            # Checkpoint of the last valid state for post-mortems.
            chk = out / "checkpoint.csv"
            nodes = _nodes_for(config)
            io.save_checkpoint(chk, exc.checkpoint, nodes)
            io.save_meta(
                out / "checkpoint.meta.json",
                config,
                exc.checkpoint.t,
                exc.step or 0,
                extra={"failure": failure},
            )
            manifest.outputs["checkpoint"] = str(chk)
        manifest.failure = failure
        manifest.timings["total"] = time.perf_counter() - tic
        manifest.save(out / "manifest.json")
        return manifest, None

    snapshot = out / "snapshot.csv"
    io.save_checkpoint(snapshot, result.state, result.nodes)
    io.save_meta(out / "snapshot.meta.json", config, result.state.t, result.steps)
    series = out / "series.csv"
    io.save_series(series, result.series)
    manifest.outputs = {"snapshot": str(snapshot), "series": str(series)}
    manifest.timings = dict(result.timings)
    manifest.timings["total"] = time.perf_counter() - tic
    manifest.save(out / "manifest.json")
    return manifest, result


def _nodes_for(config: CaseConfig):
    from .nodes import generate_nodes

    cold, hot = config.wall_faces()
    return generate_nodes(
        config.domain(), config.density_field(), config.seed, cold, hot, config.max_nodes
    )


def _with_axis(config: CaseConfig, axis: str, value) -> CaseConfig:
    axis = axis.lower()
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    name = "h" if axis in ("h", "h1") else axis
    kwargs = config.to_dict()
    kwargs[name] = int(value) if name == "c" else float(value)
    return CaseConfig(**kwargs)


def _sweep_row(label, manifest, result):
    if result is None:
        return dict(
            value=label,
            nu_cold=float("nan"),
            nu_hot=float("nan"),
            symmetry_error=float("nan"),
            nodes=0,
            steps=0,
            steady=False,
            failed=True,
        )
    eps = float("nan")
    if result.nodes.dim == 2 and not np.any(result.nodes.types == NodeType.OBSTRUCTION):
        eps = symmetry_error(
            result.state.v, result.nodes, result.disc.stencils, y=0.75
        )
    return dict(
        value=label,
        nu_cold=result.series["nu_cold"][-1],
        nu_hot=result.series["nu_hot"][-1],
        symmetry_error=eps,
        nodes=len(result.nodes),
        steps=result.steps,
        steady=result.steady,
        failed=False,
    )


def save_aggregate(path, rows) -> None:
    keys = ["value", "nu_cold", "nu_hot", "symmetry_error", "nodes", "steps", "steady", "failed"]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            cols = []
            for k in keys:
                v = row[k]
                cols.append(_FMT % v if isinstance(v, float) else str(v))
            fh.write(",".join(cols) + "\n")


def _parallel_case(args):
    config_dict, label, out_dir = args
    config = CaseConfig(**config_dict)
    manifest, result = run_case(config, out_dir)
    return manifest, _sweep_row(label, manifest, result)


def sweep(
    config: CaseConfig,
    axis: str,
    values,
    warm_start: bool = False,
    parallel: bool = False,
    out_dir=None,
) -> list[RunManifest]:
    """Sequential (optionally warm-started) runs varying one parameter.

    Failures are recorded in the aggregate and the sweep continues.
    Warm starting interpolates each run's initial state from the
    previous result and forces sequential execution.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifests = []
    rows = []
    if parallel and not warm_start:
        jobs = [
            (
                _with_axis(config, axis, value).to_dict(),
                float(value),
                str(out / f"{axis}_{value}"),
            )
            for value in values
        ]
        with ProcessPoolExecutor() as pool:
            for manifest, row in pool.map(_parallel_case, jobs):
                manifests.append(manifest)
                rows.append(row)
    else:
        previous = None
        for value in values:
            cfg = _with_axis(config, axis, value)
            manifest, result = run_case(
                cfg, out / f"{axis}_{value}", initial=previous if warm_start else None
            )
            manifests.append(manifest)
            rows.append(_sweep_row(float(value), manifest, result))
            if warm_start and result is not None:
                previous = result
    save_aggregate(out / "sweep.csv", rows)
    return manifests
