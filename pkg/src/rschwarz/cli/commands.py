"""Experiment commands. Each one builds its context from a config and writes CSV artifacts."""

import statistics
import time
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from opentelemetry import trace

from rschwarz.cli.archive import MapArchive
from rschwarz.cli.experiment_config import ExperimentConfig
from rschwarz.core.context.context import SchwarzContext
from rschwarz.core.errors import ConfigError
from rschwarz.core.grid import GridFunction
from rschwarz.core.logging.formatters.rich_formatters import format_bench, format_summary
from rschwarz.core.logging.logging import get_logger
from rschwarz.core.lowrank import RSVDConfig, rsvd_expected_bound
from rschwarz.core.schwarz import (
    RunResult,
    Spectrum,
    offline_compress,
    reference_solution,
    relative_error,
    run_reduced,
    run_vanilla,
    solve_global,
    spectrum,
)
from rschwarz.core.util.cli_helper import console
from rschwarz.core.util.files import atomic_write_csv

logger = get_logger("commands")
tracer = trace.get_tracer(__name__)

SPECTRUM_HEADER = (
    "index",
    "sigma_S",
    "sigma_Sconf",
    "sigma_A",
    "sigma_S_rel",
    "sigma_Sconf_rel",
    "sigma_A_rel",
)
HISTORY_HEADER = ("iter", "rel_error", "rel_error_global", "successive_diff")
SOLUTION_HEADER = ("x", "y", "u")
BENCH_HEADER = ("method", "k", "offline_s", "online_s", "total_s", "final_rel_error")


def _column(values: np.ndarray, index: int) -> Any:
    return float(values[index]) if index < values.size else ""


def _relative(values: np.ndarray) -> np.ndarray:
    return values / values[0] if values.size and values[0] > 0 else values


def cmd_spectrum(config: ExperimentConfig, patch_id: int, out_path: str | Path) -> Spectrum:
    """Singular values of S, S~ and A of one patch, raw and normalized by sigma_1."""
    with tracer.start_as_current_span("cmd_spectrum"):
        ctx = config.build_context()
        spec = spectrum(ctx, patch_id)
    rel = [_relative(s) for s in spec]
    rows = [
        [i + 1, *(_column(s, i) for s in spec), *(_column(r, i) for r in rel)]
        for i in range(max(s.size for s in spec))
    ]
    atomic_write_csv(out_path, SPECTRUM_HEADER, rows)
    op = ctx.patches[patch_id]
    k = config.rsvd.k
    summary = {
        "patch": patch_id,
        "boundary nodes": op.n_boundary,
        "confined nodes": op.n_confined,
        "sigma_1(S~)": float(spec.S_confined[0]),
        f"expected rank-{k} error of S~": rsvd_expected_bound(
            spec.S_confined, k, op.n_confined, op.n_boundary
        )
        if k >= 2
        else "",
        "csv": str(out_path),
    }
    console.print(format_summary(summary, "Spectrum"))
    return spec


def cmd_offline(config: ExperimentConfig, archive_path: str | Path) -> MapArchive:
    """Compress every patch map and store the archive."""
    with tracer.start_as_current_span("cmd_offline"):
        ctx = config.build_context()
        start = time.perf_counter()
        maps = offline_compress(ctx, config.rsvd.k, config.rsvd.p, config.rsvd.seed)
        elapsed = time.perf_counter() - start
        archive = MapArchive(maps)
        archive.save(archive_path)
    console.print(
        format_summary(
            {
                "patches": len(maps),
                "k": config.rsvd.k,
                "p": config.rsvd.p,
                "assembly_s": ctx.assembly_seconds,
                "offline_s": elapsed,
                "archive": str(archive_path),
            },
            "Offline stage",
        )
    )
    return archive


def _references(
    config: ExperimentConfig, ctx: SchwarzContext
) -> tuple[GridFunction | None, GridFunction | None]:
    """The vanilla reference and the direct global solution, when history is tracked."""
    if not config.run.track_history:
        return None, None
    return (
        reference_solution(ctx, config.run.reference_T),
        solve_global(ctx.grid, ctx.media, ctx.boundary),
    )


def write_solution(u: GridFunction, ctx: SchwarzContext, path: str | Path) -> Path:
    """Write `x, y, u` rows for every node of `u`."""
    ii, jj = u.rect.node_columns_rows()
    xs, ys = ctx.grid.x_coords(), ctx.grid.y_coords()
    rows = zip(xs[ii].tolist(), ys[jj].tolist(), u.values.tolist())
    return atomic_write_csv(path, SOLUTION_HEADER, rows)


def write_history(result: RunResult, path: str | Path) -> Path:
    """Write one row per tracked iteration; the first row has no successive difference."""
    rows = []
    global_errors = result.history_global or []
    for t, err in enumerate(result.history or []):
        err_global = global_errors[t] if t < len(global_errors) else ""
        diff = result.successive[t - 1] if 0 < t <= len(result.successive) else ""
        rows.append([t, err, err_global, diff])
    return atomic_write_csv(path, HISTORY_HEADER, rows)


def _write_run(
    config: ExperimentConfig, ctx: SchwarzContext, result: RunResult, out_prefix: str | Path
) -> None:
    prefix = Path(out_prefix)
    write_solution(result.final, ctx, f"{prefix}.solution.csv")
    if config.run.track_history:
        write_history(result, f"{prefix}.history.csv")
    result.to_msgpack(Path(f"{prefix}.run.msgpack"))
    summary = {
        "method": result.method,
        "iterations": result.iterations,
        "offline_s": result.offline_seconds,
        "online_s": result.online_seconds,
        "online exact solves": result.online_exact_solves,
    }
    if result.history:
        summary["final rel_error"] = result.history[-1]
    if result.history_global:
        summary["final rel_error vs global"] = result.history_global[-1]
    if result.successive:
        summary["last successive diff"] = result.successive[-1]
    console.print(format_summary(summary, f"{result.method.capitalize()} Schwarz"))


def cmd_online(
    config: ExperimentConfig,
    archive_path: str | Path,
    out_prefix: str | Path,
    boundary_path: Path | None = None,
) -> RunResult:
    """Run the reduced iteration from a stored archive.

    Raises:
        FingerprintMismatch: If the archive belongs to another configuration.
    """
    with tracer.start_as_current_span("cmd_online"):
        ctx = config.build_context(boundary_path)
        archive = MapArchive.load(archive_path, expected=ctx.fingerprint)
        reference, exact = _references(config, ctx)
        result = run_reduced(
            ctx, archive.maps, config.run.T, reference=reference, global_reference=exact
        )
    _write_run(config, ctx, result, out_prefix)
    return result


def cmd_vanilla(
    config: ExperimentConfig,
    out_prefix: str | Path,
    boundary_path: Path | None = None,
) -> RunResult:
    """Run the exact-solve iteration."""
    with tracer.start_as_current_span("cmd_vanilla"):
        ctx = config.build_context(boundary_path)
        reference, exact = _references(config, ctx)
        result = run_vanilla(ctx, config.run.T, reference=reference, global_reference=exact)
    _write_run(config, ctx, result, out_prefix)
    return result


def cmd_bench(
    config: ExperimentConfig,
    ranks: Sequence[int],
    out_path: str | Path,
    repeat: int = 1,
) -> list[dict[str, Any]]:
    """Offline and online timings per rank plus one vanilla run, medians over `repeat`.

    Assembly and factorization time is shared by both methods and reported by
    neither row.
    """
    if repeat < 1:
        raise ConfigError(f"repeat must be at least 1, got {repeat}")
    rsvd = config.rsvd
    with tracer.start_as_current_span("cmd_bench"):
        ctx = config.build_context()
        for k in ranks:
            cfg = RSVDConfig(k=k, p=rsvd.p, seed=rsvd.seed)
            for op in ctx.patches:
                cfg.check_dims(op.n_confined, op.n_boundary)
        reference = reference_solution(ctx, config.run.reference_T)
        T = config.run.T

        rows: list[dict[str, Any]] = []
        for k in ranks:
            offline, online = [], []
            for _ in range(repeat):
                start = time.perf_counter()
                maps = offline_compress(ctx, k, rsvd.p, rsvd.seed)
                offline.append(time.perf_counter() - start)
                result = run_reduced(ctx, maps, T)
                online.append(result.online_seconds)
            offline_s, online_s = statistics.median(offline), statistics.median(online)
            rows.append(
                {
                    "method": "reduced",
                    "k": k,
                    "offline_s": offline_s,
                    "online_s": online_s,
                    "total_s": offline_s + online_s,
                    "final_rel_error": relative_error(result.final, reference),
                }
            )

        vanilla = [run_vanilla(ctx, T) for _ in range(repeat)]
        vanilla_s = statistics.median(r.online_seconds for r in vanilla)
        rows.append(
            {
                "method": "vanilla",
                "k": None,
                "offline_s": 0.0,
                "online_s": vanilla_s,
                "total_s": vanilla_s,
                "final_rel_error": relative_error(vanilla[-1].final, reference),
            }
        )

    atomic_write_csv(
        out_path,
        BENCH_HEADER,
        (
            [
                r["method"],
                "" if r["k"] is None else r["k"],
                r["offline_s"],
                r["online_s"],
                r["total_s"],
                r["final_rel_error"],
            ]
            for r in rows
        ),
    )
    console.print(format_bench(rows, vanilla_s))
    return rows


def cmd_solution(
    config: ExperimentConfig,
    out_path: str | Path,
    boundary_path: Path | None = None,
) -> GridFunction:
    """Write the global field of the configured method as `x, y, u` rows."""
    with tracer.start_as_current_span("cmd_solution"):
        ctx = config.build_context(boundary_path)
        method = config.run.method
        if method == "global":
            u = solve_global(ctx.grid, ctx.media, ctx.boundary)
        elif method == "vanilla":
            u = run_vanilla(ctx, config.run.T).final
        else:
            rsvd = config.rsvd
            maps = offline_compress(ctx, rsvd.k, rsvd.p, rsvd.seed)
            u = run_reduced(ctx, maps, config.run.T).final
    write_solution(u, ctx, out_path)
    console.print(
        format_summary(
            {"method": method, "nodes": u.values.size, "csv": str(out_path)},
            "Solution",
        )
    )
    return u
