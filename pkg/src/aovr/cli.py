"""Command-line surface: synth, ingest, investigate, train, eval, trace,
report."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .analytics import (occlusion_study, random_vs_best_gap,
                        viewpoint_sensitivity_report, write_occlusion_csv,
                        write_random_vs_best_csv, write_sensitivity_csv,
                        write_summary_json)
from .config import load_config
from .container import load_container, save_container
from .env import OcclusionConfig
from .fusion import FusionModel
from .harness import (config_fingerprint, evaluate, run_experiment, split_objects,
                      write_report_csv, write_trace)
from .policy import PolicyModel
from .synth import SynthConfig, generate_synthetic


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aovr",
                                     description="Active open-vocabulary recognition laboratory")
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="root RNG seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads (results are thread-count independent)")
    parser.add_argument("--out", type=Path, default=Path("runs/latest"), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset container")
    p.add_argument("--dataset", type=Path, default=None, help="output .aovr path")

    p = sub.add_parser("ingest", help="validate an external AOVR1 container")
    p.add_argument("path", type=Path)
    p.add_argument("--copy", type=Path, default=None, help="re-write the validated container here")

    p = sub.add_parser("investigate", help="viewpoint/occlusion analytics to CSV")
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("train", help="train fusion and policy on a dataset")
    p.add_argument("--data", type=Path, default=None, help="dataset (default: synthesize per config)")

    p = sub.add_parser("eval", help="evaluate checkpointed models")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--fusion", type=Path, required=True)
    p.add_argument("--policy", type=Path, default=None, help="policy checkpoint (heuristics otherwise)")

    p = sub.add_parser("trace", help="dump episode traces as JSON lines")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--fusion", type=Path, required=True)
    p.add_argument("--policy", type=Path, default=None)
    p.add_argument("--episodes", type=int, default=8)

    p = sub.add_parser("report", help="merge eval CSVs into one summary JSON")
    p.add_argument("inputs", type=Path, nargs="+", help="eval_report.csv files")

    sub.add_parser("run", help="full pipeline: synth/ingest, investigate, train, eval")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    seed = int(config["seed"])
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "synth":
        synth_kwargs = dict(config["dataset"]["synth"])
        synth_kwargs.setdefault("seed", seed)
        dataset = generate_synthetic(SynthConfig(**synth_kwargs))
        path = args.dataset or (out / "dataset.aovr")
        save_container(dataset, path)
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        print(f"wrote {path} ({len(dataset.classes)} classes, {len(dataset.objects)} objects, "
              f"sha256 {digest[:16]})")
        return 0

    if args.command == "ingest":
        dataset = load_container(args.path)
        print(f"valid AOVR1 container: D={dataset.embed_dim} grid={dataset.azimuths}x"
              f"{dataset.elevations} classes={len(dataset.classes)} objects={len(dataset.objects)}")
        if args.copy:
            save_container(dataset, args.copy)
            print(f"re-wrote container to {args.copy}")
        return 0

    if args.command == "investigate":
        dataset = load_container(args.data)
        inv = config["investigate"]
        sens = viewpoint_sensitivity_report(dataset)
        write_sensitivity_csv(sens, out / "sensitivity_map.csv", out / "sensitivity_summary.csv")
        rvb = random_vs_best_gap(dataset, runs=int(inv["runs"]), seed=seed)
        write_random_vs_best_csv(rvb, out / "random_vs_best.csv")
        occ = occlusion_study(dataset, probs=tuple(inv["occlusion_probs"]), seed=seed)
        write_occlusion_csv(occ, out / "occlusion.csv")
        write_summary_json(out / "investigate_summary.json", sens, rvb, occ)
        print(f"mean viewpoint gap {sens.mean_gap:.3f}, "
              f"occlusion drops {[round(l['drop'], 4) for l in occ['levels']]}")
        return 0

    if args.command == "run" or args.command == "train":
        if args.command == "train" and args.data is not None:
            config = dict(config)
            config["dataset"] = dict(config["dataset"])
            config["dataset"]["path"] = str(args.data)
        run_experiment(config, out, seed=seed)
        print(f"experiment artifacts in {out} (config fingerprint "
              f"{config_fingerprint(config)[:16]})")
        return 0

    if args.command == "eval":
        dataset = load_container(args.data)
        fusion = FusionModel.load(args.fusion)
        policy = PolicyModel.load(args.policy) if args.policy else None
        _, test_idx = split_objects(dataset, int(config["dataset"]["train_objects_per_class"]))
        if not test_idx:
            test_idx = list(range(len(dataset.objects)))
        occ = OcclusionConfig(**config["env"].get("occlusion", {}))
        reports = []
        for variant in config["eval"]["variants"]:
            spec = variant["policy"]
            if spec == "trained":
                if policy is None:
                    continue
                spec = policy
            reports.append(evaluate(dataset, spec, predictor=variant["predictor"],
                                    fusion=fusion, horizon=int(config["env"]["horizon"]),
                                    occlusion=occ, objects=test_idx,
                                    repeats=int(config["eval"]["repeats"]), seed=seed,
                                    temperature=float(config["train"]["temperature"])))
        write_report_csv(reports, out / "eval_report.csv")
        for r in reports:
            final = {s: round(r.top1[s][-1], 4) for s in r.top1}
            print(f"{r.policy_name}/{r.predictor}: final-step top1 {final}")
        return 0

    if args.command == "trace":
        dataset = load_container(args.data)
        fusion = FusionModel.load(args.fusion)
        spec = PolicyModel.load(args.policy) if args.policy else "random"
        _, test_idx = split_objects(dataset, int(config["dataset"]["train_objects_per_class"]))
        if not test_idx:
            test_idx = list(range(len(dataset.objects)))
        objects = test_idx[:args.episodes]
        path = out / "trace.jsonl"
        write_trace(path, dataset, spec, fusion, int(config["env"]["horizon"]),
                    objects, seed=seed, temperature=float(config["train"]["temperature"]),
                    occlusion=OcclusionConfig(**config["env"].get("occlusion", {})))
        print(f"wrote {len(objects)} episode traces to {path}")
        return 0

    if args.command == "report":
        import csv as _csv
        merged: dict = {}
        for src in args.inputs:
            with open(src, newline="") as fh:
                for row in _csv.DictReader(fh):
                    key = f"{row['policy']}/{row['predictor']}/{row['split']}"
                    merged.setdefault(key, {})[f"step{row['step']}"] = {
                        "top1": float(row["top1"]), "top3": float(row["top3"])}
        path = out / "summary.json"
        path.write_text(json.dumps({"schema_version": 1, "tables": merged},
                                   indent=2, sort_keys=True) + "\n")
        print(f"merged {len(args.inputs)} reports into {path}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
