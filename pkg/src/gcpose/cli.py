"""Command-line entry point: dataset generation, solving, benchmarking.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 internal error.
All randomness in a command flows from one root seed; trial or scene i uses
the derived seed (root * 1_000_003 + i) mod 2^63, so any row can be
regenerated from the printed seed and flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import grps, initializers, ransac, synth, upnp
from .geometry import rotation_error_deg, scale_error_pct, translation_error_pct
from .tracker import TrackerConfig

BENCH_CSV_FORMAT = "bench_csv_v1"
BENCH_COLUMNS = [
    "trial", "seed", "status", "success",
    "e_r_deg", "e_t_pct", "e_s_pct", "iterations", "time_us",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def derive_seed(root_seed: int, index: int) -> int:
    return (root_seed * 1_000_003 + index) % 2**63


def _parse_init(spec: str, gt=None, seed: int = 0):
    """Build a solver-facing initializer from its CLI description.

    Forms: ``random`` | ``oracle:ROT_DEG,TRANS_FRAC,SCALE_FRAC`` |
    ``model:PATH``.  The oracle form needs ground truth and redraws its
    perturbation on every call.
    """
    if spec == "random":
        return None  # resolved per problem kind by the caller
    if spec.startswith("oracle:"):
        try:
            rot_deg, trans_frac, scale_frac = (float(x) for x in spec[7:].split(","))
        except ValueError as exc:
            raise UsageError(f"bad oracle spec {spec!r}") from exc
        if gt is None:
            raise UsageError("oracle initializer requires ground truth")
        rng = np.random.default_rng(seed)

        def initializer(_corrs):
            return initializers.perturbed_oracle(
                gt, rot_deg, trans_frac, scale_frac, int(rng.integers(0, 2**63))
            )

        return initializer
    if spec.startswith("model:"):
        model = initializers.load_regressor(spec[6:])
        return initializers.make_regressor_initializer(model)
    raise UsageError(f"unknown initializer spec {spec!r}")


def _initializer_for_scene(spec: str, scene, seed: int):
    if spec == "random":
        return initializers.make_random_initializer(seed, scene.problem_kind)
    return _parse_init(spec, gt=scene.gt_pose, seed=seed)


def _scene_config(args, kind: str, seed: int) -> synth.SceneConfig:
    base = synth.default_upnp_config(seed) if kind == "upnp" else synth.default_grps_config(seed)
    overrides = {"noise_px": args.noise_px, "noise_model": args.noise_model, "seed": seed}
    if args.points is not None:
        overrides["n_points"] = args.points
    if args.cameras is not None:
        overrides["n_cameras"] = args.cameras
    if args.focal is not None:
        overrides["virtual_focal_px"] = args.focal
    return replace(base, **overrides)


def _solve_scene(scene, initializer, step_size: float | None):
    if scene.problem_kind == "upnp":
        config = upnp.default_config()
        if step_size is not None:
            config = TrackerConfig(step_size=step_size, max_newton_iters=config.max_newton_iters)
        started = time.perf_counter()
        result = upnp.solve(scene.corrs, initializer, config)
        elapsed = time.perf_counter() - started
    else:
        config = grps.default_config()
        if step_size is not None:
            config = TrackerConfig(step_size=step_size, max_newton_iters=config.max_newton_iters)
        started = time.perf_counter()
        result = grps.solve(scene.corrs, initializer, config)
        elapsed = time.perf_counter() - started
    return result, elapsed


def _error_row(pose, gt_pose):
    e_r = rotation_error_deg(pose.rotation_matrix(), gt_pose.rotation_matrix())
    try:
        e_t = translation_error_pct(pose.t, gt_pose.t)
    except ValueError:
        e_t = float("nan")
    try:
        e_s = scale_error_pct(pose.s, gt_pose.s)
    except ValueError:
        e_s = float("nan")
    return e_r, e_t, e_s


def _success(e_r, e_t, e_s, kind, rot_threshold_deg, rel_threshold_pct) -> bool:
    if not (e_r <= rot_threshold_deg):
        return False
    if kind == "grps" and rel_threshold_pct is not None:
        if not (e_t <= rel_threshold_pct and e_s <= rel_threshold_pct):
            return False
    return True


def cmd_synth(args) -> int:
    scenes = []
    for i in range(args.scenes):
        cfg = _scene_config(args, args.kind, derive_seed(args.seed, i))
        scenes.append(synth.gen_scene(cfg))
    try:
        synth.write_dataset(scenes, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(scenes)} {args.kind} scenes (root seed {args.seed}) -> {args.out}")
    return 0


def cmd_solve(args) -> int:
    try:
        scenes = synth.read_dataset(args.input)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    writer = csv.writer(sys.stdout)
    if not args.json:
        writer.writerow(["scene", "seed", "status", "e_r_deg", "e_t_pct", "e_s_pct", "time_us"])
    for i, scene in enumerate(scenes):
        try:
            initializer = _initializer_for_scene(args.init, scene, derive_seed(args.seed, i))
            result, elapsed = _solve_scene(scene, initializer, args.step_size)
            e_r, e_t, e_s = _error_row(result.pose, scene.gt_pose)
            row = {
                "scene": i,
                "seed": scene.config.seed,
                "status": result.track.status.value,
                "e_r_deg": e_r,
                "e_t_pct": e_t,
                "e_s_pct": e_s,
                "time_us": elapsed * 1e6,
            }
        except (ValueError, RuntimeError) as exc:
            row = {
                "scene": i,
                "seed": scene.config.seed,
                "status": f"error: {exc}",
                "e_r_deg": float("nan"),
                "e_t_pct": float("nan"),
                "e_s_pct": float("nan"),
                "time_us": float("nan"),
            }
        if args.json:
            print(json.dumps(row))
        else:
            writer.writerow([row[k] for k in ("scene", "seed", "status", "e_r_deg", "e_t_pct", "e_s_pct", "time_us")])
    return 0


def _bench_trial(payload: dict) -> dict:
    """One benchmark trial; module-level so worker pools can pickle it."""
    kind = payload["kind"]
    seed = payload["seed"]
    cfg = replace(synth._config_from_dict(payload["scene_config"]), seed=seed)
    scene = synth.gen_scene(cfg)
    init_spec = payload["init"]
    row = {"trial": payload["trial"], "seed": seed, "iterations": 0}
    try:
        if payload["ransac"]:
            rng = np.random.default_rng(derive_seed(seed, 1))
            corrs, _ = synth.corrupt_with_outliers(scene, payload["outlier_ratio"], rng)
            initializer = _initializer_for_scene(init_spec, scene, derive_seed(seed, 2))
            rcfg = ransac.RansacConfig(
                max_iters=payload["max_iters"],
                inlier_threshold=payload["inlier_threshold"],
                sample_size=8 if kind == "grps" else 4,
                seed=derive_seed(seed, 3),
            )
            solver_cfg = grps.default_config() if kind == "grps" else upnp.default_config()

            def solver(sample):
                if kind == "grps":
                    return grps.solve(sample, initializer, solver_cfg)
                return upnp.solve(sample, initializer, solver_cfg)

            started = time.perf_counter()
            result = ransac.ransac_solve(corrs, solver, rcfg)
            elapsed = time.perf_counter() - started
            pose = result.best_pose
            row["status"] = "ok"
            row["iterations"] = result.iterations_run
        else:
            initializer = _initializer_for_scene(init_spec, scene, derive_seed(seed, 2))
            result, elapsed = _solve_scene(scene, initializer, payload["step_size"])
            pose = result.pose
            row["status"] = result.track.status.value
        e_r, e_t, e_s = _error_row(pose, scene.gt_pose)
        row.update(
            e_r_deg=e_r,
            e_t_pct=e_t,
            e_s_pct=e_s,
            time_us=elapsed * 1e6,
            success=_success(e_r, e_t, e_s, kind, payload["rot_threshold"], payload["rel_threshold"]),
        )
    except (ValueError, RuntimeError) as exc:
        row.update(
            status=f"error: {exc}",
            e_r_deg=float("nan"),
            e_t_pct=float("nan"),
            e_s_pct=float("nan"),
            time_us=float("nan"),
            success=False,
        )
    return row


def _aggregate(rows: list[dict]) -> dict:
    def finite(key):
        vals = [r[key] for r in rows if isinstance(r.get(key), float) and math.isfinite(r[key])]
        return vals

    succ = [r for r in rows if r.get("success")]
    agg = {
        "trials": len(rows),
        "success_rate": len(succ) / len(rows) if rows else float("nan"),
        "median_e_r_deg": statistics.median(finite("e_r_deg")) if finite("e_r_deg") else float("nan"),
        "median_e_t_pct": statistics.median(finite("e_t_pct")) if finite("e_t_pct") else float("nan"),
        "median_e_s_pct": statistics.median(finite("e_s_pct")) if finite("e_s_pct") else float("nan"),
        "mean_time_us": statistics.fmean(finite("time_us")) if finite("time_us") else float("nan"),
        "median_time_us": statistics.median(finite("time_us")) if finite("time_us") else float("nan"),
    }
    succ_errors = [r["e_r_deg"] for r in succ if math.isfinite(r["e_r_deg"])]
    agg["mean_e_r_deg_success"] = statistics.fmean(succ_errors) if succ_errors else float("nan")
    return agg


def _check_aggregates(rows: list[dict], agg: dict) -> None:
    recomputed = _aggregate(rows)
    for key, value in agg.items():
        other = recomputed[key]
        if isinstance(value, float) and math.isnan(value):
            assert isinstance(other, float) and math.isnan(other)
        else:
            assert value == other, f"aggregate {key} not recomputable from rows"


def cmd_bench(args) -> int:
    payloads = []
    for i in range(args.trials):
        seed = derive_seed(args.seed, i)
        cfg = _scene_config(args, args.kind, seed)
        if args.ransac and args.corrs is not None:
            cfg = replace(cfg, n_points=args.corrs, n_cameras=args.cameras or 5)
        payloads.append(
            {
                "trial": i,
                "seed": seed,
                "kind": args.kind,
                "scene_config": synth._config_to_dict(cfg),
                "init": args.init,
                "step_size": args.step_size,
                "rot_threshold": args.threshold_deg,
                "rel_threshold": args.rel_threshold_pct,
                "ransac": args.ransac,
                "outlier_ratio": args.outlier_ratio,
                "max_iters": args.max_iters,
                "inlier_threshold": args.inlier_threshold,
            }
        )
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_bench_trial, payloads))
    else:
        rows = [_bench_trial(p) for p in payloads]
    agg = _aggregate(rows)
    _check_aggregates(rows, agg)

    if args.csv:
        try:
            with open(args.csv, "w", newline="") as fh:
                fh.write(f"# {BENCH_CSV_FORMAT}\n")
                writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: row.get(k) for k in BENCH_COLUMNS})
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    if args.json:
        print(json.dumps({"format": BENCH_CSV_FORMAT, "rows": rows, "aggregate": agg}))
    else:
        out = io.StringIO()
        out.write(f"kind={args.kind} trials={args.trials} seed={args.seed} init={args.init}\n")
        if args.ransac:
            out.write(f"ransac outlier_ratio={args.outlier_ratio}\n")
        out.write(
            f"{'success rate':>18}: {agg['success_rate'] * 100:8.1f} %"
            f"  (rot <= {args.threshold_deg} deg"
            + (f", rel <= {args.rel_threshold_pct} %)" if args.kind == "grps" else ")")
            + "\n"
        )
        out.write(f"{'median E_R':>18}: {agg['median_e_r_deg']:10.4f} deg\n")
        out.write(f"{'median E_t':>18}: {agg['median_e_t_pct']:10.4f} %\n")
        if args.kind == "grps":
            out.write(f"{'median E_s':>18}: {agg['median_e_s_pct']:10.4f} %\n")
        out.write(f"{'median time':>18}: {agg['median_time_us'] / 1000.0:10.4f} ms\n")
        out.write(f"{'mean time':>18}: {agg['mean_time_us'] / 1000.0:10.4f} ms\n")
        print(out.getvalue(), end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="gcpose", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a dataset file")
    p_synth.add_argument("--kind", choices=["upnp", "grps"], required=True)
    p_synth.add_argument("--scenes", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--points", type=int, default=None)
    p_synth.add_argument("--cameras", type=int, default=None)
    p_synth.add_argument("--noise-px", type=float, default=0.0)
    p_synth.add_argument("--noise-model", choices=["uniform", "gaussian"], default="uniform")
    p_synth.add_argument("--focal", type=float, default=None)
    p_synth.add_argument("--out", required=True)

    p_solve = sub.add_parser("solve", help="solve every scene of a dataset")
    p_solve.add_argument("--input", required=True)
    p_solve.add_argument("--init", default="random",
                         help="random | oracle:ROT,TFRAC,SFRAC | model:PATH")
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--step-size", type=float, default=None)
    p_solve.add_argument("--json", action="store_true")

    p_bench = sub.add_parser("bench", help="generate scenes, solve, report")
    p_bench.add_argument("--kind", choices=["upnp", "grps"], required=True)
    p_bench.add_argument("--trials", type=int, required=True)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--init", default="random")
    p_bench.add_argument("--points", type=int, default=None)
    p_bench.add_argument("--cameras", type=int, default=None)
    p_bench.add_argument("--noise-px", type=float, default=0.0)
    p_bench.add_argument("--noise-model", choices=["uniform", "gaussian"], default="uniform")
    p_bench.add_argument("--focal", type=float, default=None)
    p_bench.add_argument("--step-size", type=float, default=None)
    p_bench.add_argument("--threshold-deg", type=float, default=2.0)
    p_bench.add_argument("--rel-threshold-pct", type=float, default=None)
    p_bench.add_argument("--csv", default=None)
    p_bench.add_argument("--json", action="store_true")
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--ransac", action="store_true")
    p_bench.add_argument("--corrs", type=int, default=None)
    p_bench.add_argument("--outlier-ratio", type=float, default=0.0)
    p_bench.add_argument("--max-iters", type=int, default=200)
    p_bench.add_argument("--inlier-threshold", type=float, default=0.01)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "bench":
            return cmd_bench(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
