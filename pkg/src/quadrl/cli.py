"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 64 usage error.
"""

from __future__ import annotations

import csv
import json
import sys

import click
import numpy as np

from .errors import QuadRLError
from .fileio import read_obj, read_xyz, write_obj
from .geometry import (
    TriangulatedView,
    chamfer_distance,
    f1_score,
    hausdorff_distance,
    normal_consistency,
    sample_surface_points,
)
from .harness import ScheduleConfig, validate_schedule
from .mesh import canonicalize, dequantize_vertices, normalize_mesh, quantize_vertices
from .metrics import BrokenCheckConfig, broken_check
from .rewards import RewardConfig, compute_reward
from .metrics import quad_ratio
from .simulate import LengthDistribution, speedup
from .tokenizer import (
    detokenize as detokenize_seq,
    read_qtok,
    read_tokens_text,
    tokenize as tokenize_mesh,
    write_qtok,
    write_tokens_text,
)
from .toytask import ToyTaskConfig, train_toy


@click.group()
def cli():
    """Mesh tokenization, rewards, and the asynchronous toy RL loop."""


@cli.command("tokenize")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--bits", default=10, show_default=True, help="quantization bit depth")
@click.option("--text", is_flag=True, help="write one token per line instead of binary")
def tokenize_cmd(input_path, output_path, bits, text):
    """Normalize, quantize, canonicalize, and serialize a mesh to tokens."""
    mesh = read_obj(input_path)
    qmesh, dropped = canonicalize(quantize_vertices(normalize_mesh(mesh), bits))
    seq = tokenize_mesh(qmesh)
    if text:
        write_tokens_text(seq, output_path)
    else:
        write_qtok(seq, output_path)
    click.echo(
        f"{len(seq)} tokens, {qmesh.n_faces} faces "
        f"({dropped} degenerate dropped), bits={bits}"
    )


@cli.command("detokenize")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option(
    "--strictness",
    type=click.Choice(["strict", "permissive"]),
    default="strict",
    show_default=True,
)
@click.option("--text-bits", default=None, type=int, help="read text tokens at this bit depth")
def detokenize_cmd(input_path, output_path, strictness, text_bits):
    """Decode a token file back into an OBJ mesh."""
    if text_bits is not None:
        seq = read_tokens_text(input_path, bits=text_bits)
    else:
        seq = read_qtok(input_path)
    result = detokenize_seq(seq, strictness)
    write_obj(dequantize_vertices(result.mesh), output_path)
    click.echo(
        f"{result.mesh.n_faces} faces, {result.mesh.n_vertices} vertices; "
        f"dropped {result.dropped_blocks} blocks, {result.dropped_degenerate} degenerate"
    )


def _load_points(path: str, samples: int, seed: int) -> np.ndarray:
    if path.endswith(".xyz"):
        return read_xyz(path)
    return sample_surface_points(TriangulatedView(read_obj(path)), samples, seed)


@cli.command("reward")
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("condition_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--theta-ray", default=1.0, show_default=True)
@click.option("--theta-hd", default=0.1, show_default=True)
@click.option("--w-qr", default=0.1, show_default=True)
@click.option("--per-axis", default=32, show_default=True)
@click.option("--samples", default=2048, show_default=True)
@click.option("--seed", default=0, show_default=True)
def reward_cmd(mesh_path, condition_path, theta_ray, theta_hd, w_qr, per_axis, samples, seed):
    """Gated reward of a mesh against a condition (.obj surface or .xyz cloud)."""
    mesh = read_obj(mesh_path)
    points = _load_points(condition_path, samples, seed)
    cfg = RewardConfig(
        w_qr=w_qr,
        theta_ray=theta_ray,
        theta_hd=theta_hd,
        per_axis=per_axis,
        sample_count=samples,
    )
    report = compute_reward(mesh, points, cfg, seed)
    click.echo(report.to_json())


@cli.command("score")
@click.argument("mesh_paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--samples", default=2048, show_default=True)
@click.option("--f1-threshold", default=0.01, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="CSV path (default stdout)")
def score_cmd(mesh_paths, reference, samples, f1_threshold, seed, output):
    """Per-mesh metric CSV plus a broken-ratio summary row.

    Distance metrics need --reference; without it those columns stay empty.
    """
    ref_mesh = read_obj(reference) if reference else None
    ref_pts = (
        sample_surface_points(TriangulatedView(ref_mesh), samples, seed) if ref_mesh else None
    )
    rows = []
    broken_flags = []
    for i, path in enumerate(mesh_paths):
        mesh = read_obj(path)
        score, is_broken = broken_check(mesh, BrokenCheckConfig(), seed=hash((seed, i)) & 0x7FFFFFFF)
        broken_flags.append(is_broken)
        row = {
            "path": path,
            "cd": "",
            "hd": "",
            "nc": "",
            "f1": "",
            "quad_ratio": f"{quad_ratio(mesh):.6f}",
            "broken_score": f"{score:.6f}",
            "is_broken": str(is_broken).lower(),
        }
        if ref_pts is not None:
            pts = sample_surface_points(TriangulatedView(mesh), samples, seed)
            _, _, f1 = f1_score(pts, ref_pts, f1_threshold)
            row["cd"] = f"{chamfer_distance(pts, ref_pts):.6f}"
            row["hd"] = f"{hausdorff_distance(pts, ref_pts):.6f}"
            row["nc"] = f"{normal_consistency(mesh, ref_mesh, samples, seed):.6f}"
            row["f1"] = f"{f1:.6f}"
        rows.append(row)

    fh = open(output, "w", newline="") if output else sys.stdout
    try:
        writer = csv.DictWriter(
            fh, fieldnames=["path", "cd", "hd", "nc", "f1", "quad_ratio", "broken_score", "is_broken"]
        )
        writer.writeheader()
        writer.writerows(rows)
        fh.write(f"# broken_ratio,{np.mean(broken_flags):.6f}\n")
    finally:
        if output:
            fh.close()


@cli.command("train-toy")
@click.option("--outdir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--bits", default=2, show_default=True)
@click.option("--checkpoints", default=5, show_default=True)
@click.option("--lr", default=0.1, show_default=True)
@click.option("--beta", default=1.0, show_default=True)
@click.option("--eval-samples", default=64, show_default=True)
def train_toy_cmd(outdir, seed, bits, checkpoints, lr, beta, eval_samples):
    """Run the asynchronous ranking-preference loop on the toy mesh task."""
    cfg = ToyTaskConfig(
        bits=bits,
        checkpoints=checkpoints,
        lr=lr,
        beta=beta,
        eval_samples=eval_samples,
        seed=seed,
    )
    summary = train_toy(cfg, outdir)
    for entry in summary["checkpoints"]:
        click.echo(
            f"checkpoint {entry['checkpoint']}: "
            f"mean_reward={entry['mean_reward']:.4f} "
            f"gate_pass_rate={entry['gate_pass_rate']:.3f}"
        )


@cli.command("bench-async")
@click.option("--workers", default=16, show_default=True)
@click.option(
    "--dist", "dist_kind", type=click.Choice(["lognormal", "constant"]), default="lognormal",
    show_default=True,
)
@click.option("--mean", default=1.0, show_default=True)
@click.option("--cv", default=1.0, show_default=True)
@click.option("--train-time", default=0.01, show_default=True)
@click.option("--horizon", default=1000.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def bench_async_cmd(workers, dist_kind, mean, cv, train_time, horizon, seed):
    """Virtual-time sync vs async rollout throughput comparison."""
    dist = LengthDistribution(dist_kind, mean, cv)
    result = speedup(dist, workers, train_time, horizon, seed)
    out = {
        "sync_samples_per_hour": result["sync"].samples_per_hour,
        "async_samples_per_hour": result["async"].samples_per_hour,
        "sync_worker_utilization": result["sync"].worker_utilization,
        "async_worker_utilization": result["async"].worker_utilization,
        "speedup": result["speedup"],
    }
    click.echo(json.dumps(out, indent=2))


@cli.command("validate-schedule")
@click.option("--n1", required=True, type=int, help="pre-start trainer steps")
@click.option("--n2", required=True, type=int, help="steps per online phase")
@click.option("--trainer-workers", "-t", default=1, show_default=True)
@click.option("--batch-size", "-b", required=True, type=int)
@click.option("--s1", required=True, type=int, help="pre-start buffer samples")
@click.option("--s2", required=True, type=int, help="steady-state buffer samples")
@click.option("--sigma", required=True, type=int, help="minimum buffer samples")
@click.option("--sigma-min", default=8.0, show_default=True)
@click.option("--sigma-max", default=64.0, show_default=True)
def validate_schedule_cmd(n1, n2, trainer_workers, batch_size, s1, s2, sigma, sigma_min, sigma_max):
    """Check an update-frequency schedule; invalid schedules exit 1."""
    cfg = ScheduleConfig(
        n1=n1,
        n2=n2,
        trainer_workers=trainer_workers,
        batch_size=batch_size,
        s1=s1,
        s2=s2,
        sigma=sigma,
        sigma_min=sigma_min,
        sigma_max=sigma_max,
    )
    report = validate_schedule(cfg)
    click.echo(json.dumps({"valid": report.valid, "ratio": report.ratio, "violations": report.violations}))
    if not report.valid:
        sys.exit(1)


def main():
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(64)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except (OSError, ValueError) as exc:
        # ValueError covers malformed file contents (bad magic, bad numbers)
        click.echo(f"error: {exc}", err=True)
        sys.exit(2 if isinstance(exc, OSError) else 1)
    except QuadRLError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
