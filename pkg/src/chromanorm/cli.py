"""Batch command line driver.

`chromanorm normalize` runs the full pipeline over files or directories and
writes all intermediate artifacts plus a JSON report per image;
`chromanorm match` computes a chi-square distance matrix and rank-1
accuracy between a gallery and a query directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import shadow_edge
from .face_features import chi_square, lbp_uniform_histogram, lpq_histogram, rank1_identify
from .image_core import load_gray_image, load_image, save_image, save_mask
from .pipeline import PipelineConfig, process_image

SCHEMA_VERSION = 1
IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_json(path: Path, doc: dict) -> None:
    tmp = path.with_suffix(path.suffix + f".tmp.{os.getpid()}")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + f".tmp.{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _collect_inputs(paths) -> list[Path]:
    files = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES))
        else:
            files.append(p)
    return files


def _unique_dirs(out_dir: Path, inputs: list[Path]) -> list[Path]:
    seen: dict[str, int] = {}
    dirs = []
    for p in inputs:
        stem = p.stem
        seen[stem] = seen.get(stem, 0) + 1
        name = stem if seen[stem] == 1 else f"{stem}_{seen[stem]}"
        dirs.append(out_dir / name)
    return dirs


def _process_one(path: Path, dest: Path, config: PipelineConfig, emit: str) -> dict:
    img = load_image(path, decode_gamma=config.decode_gamma)
    result = process_image(img, config)
    dest.mkdir(parents=True, exist_ok=True)

    warnings = {}
    artifacts = {}
    if emit == "all":
        save_mask(result.highlight_mask, dest / "highlight_mask.png")
        artifacts["highlight_mask"] = "highlight_mask.png"
        save_mask(result.edge_mask, dest / "edge_mask.png")
        artifacts["edge_mask"] = "edge_mask.png"
        _write_text(dest / "entropy.csv", result.profile.to_csv())
        artifacts["entropy_profile"] = "entropy.csv"
        params = config.edge_params()
        for name, self_guided, theta in (("gradient_min.png", False, result.profile.theta_min),
                                         ("gradient_max.png", True, result.profile.theta_max)):
            gm = shadow_edge.gradient_magnitude_map(result.field, theta, params, self_guided)
            warnings[name] = save_image(gm, dest / name, encode_gamma=False)
            artifacts[name.removesuffix(".png")] = name
    if emit in ("all", "cii"):
        warnings["cii"] = save_image(result.cii, dest / "cii.png", encode_gamma=False)
        artifacts["cii"] = "cii.png"
    if emit in ("all", "recovered"):
        warnings["recovered"] = save_image(result.recovered, dest / "recovered.png",
                                           encode_gamma=config.decode_gamma)
        artifacts["recovered"] = "recovered.png"

    report = {
        "schema_version": SCHEMA_VERSION,
        "generated_at": _timestamp(),
        "input": str(path),
        "status": "ok",
        "config": config.to_dict(),
        "artifacts": artifacts,
        "clamp_warnings": warnings,
    }
    report.update(result.report_fields())
    _write_json(dest / "report.json", report)
    return report


def run_normalize(args) -> int:
    config = PipelineConfig()
    if args.config:
        config = PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
    config = config.override(
        decode_gamma=False if args.no_decode_gamma else None,
        theta_step_deg=args.theta_step_deg,
        trim=args.trim,
        m_exponent=args.m_exponent,
        printed_exponent=True if args.printed_exponent else None,
        tau1=args.tau1,
        tau2=args.tau2,
        guided_radius=args.guided_radius,
        guided_eps=args.guided_eps,
        dilate_radius=args.dilate_radius,
        poisson_tol=args.poisson_tol,
        seed=args.seed,
    )

    inputs = _collect_inputs(args.input)
    if not inputs:
        print("error: no input images found", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dests = _unique_dirs(out_dir, inputs)

    def worker(pair):
        path, dest = pair
        try:
            _process_one(path, dest, config, args.emit)
            return {"input": str(path), "output_dir": str(dest), "status": "ok"}
        except Exception as exc:  # per-file isolation: the batch continues
            return {"input": str(path), "output_dir": str(dest), "status": "error",
                    "error": f"{type(exc).__name__}: {exc}"}

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(worker, zip(inputs, dests)))
    else:
        entries = [worker(pair) for pair in zip(inputs, dests)]

    failures = [e for e in entries if e["status"] != "ok"]
    for entry in entries:
        line = f"{entry['status']:5s} {entry['input']}"
        if entry["status"] != "ok":
            line += f" ({entry['error']})"
        print(line)
    batch = {
        "schema_version": SCHEMA_VERSION,
        "generated_at": _timestamp(),
        "exit_code": 1 if failures else 0,
        "files": entries,
    }
    _write_json(out_dir / "batch_report.json", batch)
    return 1 if failures else 0


def _load_features(directory: Path, feature: str, decode_gamma: bool):
    extractor = lbp_uniform_histogram if feature == "lbp" else lpq_histogram
    entries = []
    errors = []
    for path in sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        identity = path.stem.split("_")[0]
        if not identity:
            errors.append(f"{path}: cannot parse identity from filename")
            continue
        try:
            hist = extractor(load_gray_image(path, decode_gamma=decode_gamma))
        except Exception as exc:
            errors.append(f"{path}: {type(exc).__name__}: {exc}")
            continue
        entries.append((identity, path.name, hist))
    return entries, errors


def run_match(args) -> int:
    gallery_dir, query_dir = Path(args.gallery), Path(args.query)
    for d in (gallery_dir, query_dir):
        if not d.is_dir():
            print(f"error: {d} is not a directory", file=sys.stderr)
            return 2
    decode = not args.no_decode_gamma
    gallery, gallery_errors = _load_features(gallery_dir, args.feature, decode)
    queries, query_errors = _load_features(query_dir, args.feature, decode)
    for msg in gallery_errors + query_errors:
        print(f"error: {msg}", file=sys.stderr)
    if not gallery or not queries:
        print("error: gallery and query sets must both be nonempty", file=sys.stderr)
        return 2

    lines = ["query," + ",".join(name for _, name, _ in gallery)]
    hits = 0
    for qid, qname, qhist in queries:
        dists = [chi_square(qhist, ghist) for _, _, ghist in gallery]
        lines.append(qname + "," + ",".join(f"{d:.9f}" for d in dists))
        predicted = rank1_identify(qhist, [(gid, gh) for gid, _, gh in gallery])
        hits += predicted == qid
    _write_text(Path(args.out), "\n".join(lines) + "\n")
    accuracy = hits / len(queries)
    print(f"rank1_accuracy={accuracy:.4f} ({hits}/{len(queries)})")
    return 1 if gallery_errors or query_errors else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chromanorm",
                                     description="Chromaticity-space lighting normalization")
    sub = parser.add_subparsers(dest="command", required=True)

    norm = sub.add_parser("normalize", help="run the full pipeline over images")
    norm.add_argument("--input", nargs="+", required=True, help="image files or directories")
    norm.add_argument("--out", required=True, help="output directory")
    norm.add_argument("--config", help="JSON file with PipelineConfig fields")
    norm.add_argument("--emit", choices=("all", "cii", "recovered"), default="all")
    norm.add_argument("--jobs", type=int, default=1)
    norm.add_argument("--seed", type=int, default=None)
    norm.add_argument("--theta-step-deg", type=float, default=None)
    norm.add_argument("--trim", type=float, default=None)
    norm.add_argument("--m-exponent", type=float, default=None)
    norm.add_argument("--printed-exponent", action="store_true")
    norm.add_argument("--tau1", type=float, default=None)
    norm.add_argument("--tau2", type=float, default=None)
    norm.add_argument("--guided-radius", type=int, default=None)
    norm.add_argument("--guided-eps", type=float, default=None)
    norm.add_argument("--dilate-radius", type=int, default=None)
    norm.add_argument("--poisson-tol", type=float, default=None)
    norm.add_argument("--no-decode-gamma", action="store_true")
    norm.set_defaults(func=run_normalize)

    match = sub.add_parser("match", help="chi-square matching between two directories")
    match.add_argument("--gallery", required=True)
    match.add_argument("--query", required=True)
    match.add_argument("--feature", choices=("lbp", "lpq"), default="lbp")
    match.add_argument("--out", required=True, help="distance matrix CSV path")
    match.add_argument("--no-decode-gamma", action="store_true")
    match.set_defaults(func=run_match)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
