"""Command-line entry points.

Subcommands: ``generate`` (randomized dataset synthesis), ``bench``
(generation throughput report), ``interpolate`` (checkpoint blending),
``evaluate`` (segmentation scoring from a pairing manifest), ``epg``
(standalone spin-echo rendering), and ``cluster-inspect`` (subclass
partition inspection).

Generation is deterministic in (inputs, config, master seed): every
random draw comes from a counter-based stream keyed by (seed, sample
index, stage), so the worker count never changes outputs.  All files are
written to a temporary name and renamed into place, and each sample gets
a JSON provenance sidecar from which it can be re-rendered bit-exactly.

Failures exit nonzero after printing one machine-parsable line to
stderr: ``error: <ErrorType>: <message>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .augment import AugmentProfile
from .checkpoints import DEFAULT_SWEEP, interpolate, read_checkpoint, write_checkpoint
from .config import apply_sections, config_sections, load_config
from .epg import RelaxometryMode, draw_sequence, render_epg_volume, sample_relaxometry
from .errors import ConfigError, DrsynthError, EmptySample, IoError
from .generator import GenerationConfig, GeneratorMode, generate_sample
from .labels import build_meta_classes, split_meta_classes, toy_label_map
from .metrics import batch_evaluate, report_rows
from .nifti import read_nifti, write_nifti
from .rng import make_stream
from .volume import LabelMap, LabelScheme, Volume3D

SIDECAR_FORMAT = "drsynth-sample/1"


# ---------------------------------------------------------------------------
# shared plumbing


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc


def _file_sha(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_generation_config(args) -> GenerationConfig:
    cfg = load_config(args.config) if args.config else GenerationConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=GeneratorMode(args.mode))
    if getattr(args, "profile", None):
        cfg = replace(cfg, profile=AugmentProfile(args.profile))
    return cfg


def discover_subjects(in_dir: str, skip_unreadable: bool = False):
    """Pair ``<subject>_image.nii[.gz]`` with ``<subject>_labels.nii[.gz]``.

    Returns sorted (subject_id, image_path, labels_path) triples.  With
    ``skip_unreadable`` every pair is test-read and broken ones are
    dropped with a warning; otherwise the first broken pair aborts.
    """
    if not os.path.isdir(in_dir):
        raise IoError(f"input directory {in_dir!r} does not exist")
    stems: dict[str, dict[str, str]] = {}
    for name in sorted(os.listdir(in_dir)):
        base = name
        for ext in (".nii.gz", ".nii"):
            if base.endswith(ext):
                base = base[: -len(ext)]
                break
        else:
            continue
        for kind in ("image", "labels"):
            suffix = f"_{kind}"
            if base.endswith(suffix):
                sid = base[: -len(suffix)]
                stems.setdefault(sid, {})[kind] = os.path.join(in_dir, name)
    triples = []
    for sid in sorted(stems):
        pair = stems[sid]
        if "image" not in pair or "labels" not in pair:
            missing = "image" if "image" not in pair else "labels"
            msg = f"subject {sid!r}: missing _{missing} file"
            if skip_unreadable:
                print(f"warning: {msg}, skipping", file=sys.stderr)
                continue
            raise IoError(msg)
        if skip_unreadable:
            try:
                read_nifti(pair["labels"], scheme=LabelScheme.FETA7)
                read_nifti(pair["image"])
            except DrsynthError as exc:
                print(f"warning: subject {sid!r} unreadable ({exc}), skipping", file=sys.stderr)
                continue
        triples.append((sid, pair["image"], pair["labels"]))
    return triples


def _sample_basename(sid: str, index: int, seed: int) -> str:
    return f"{sid}_s{index:05d}_seed{seed}"


def _render_task(task):
    """One generation unit, safe to run in a worker process."""
    sid, image_path, labels_path, cfg, index, out_dir = task
    labels = read_nifti(labels_path, scheme=LabelScheme.FETA7)
    intensity = read_nifti(image_path)
    pair = generate_sample(labels, intensity, cfg, index, subject_id=sid)

    base = _sample_basename(sid, index, cfg.master_seed)
    out_image = os.path.join(out_dir, f"{base}_image.nii.gz")
    out_labels = os.path.join(out_dir, f"{base}_labels.nii.gz")
    out_sidecar = os.path.join(out_dir, f"{base}.json")
    write_nifti(pair.image, out_image)
    write_nifti(pair.labels, out_labels)

    sidecar = {
        "format": SIDECAR_FORMAT,
        "subject": sid,
        "sample_index": index,
        "master_seed": cfg.master_seed,
        "inputs": {
            "image": os.path.abspath(image_path),
            "labels": os.path.abspath(labels_path),
            "image_sha256": _file_sha(image_path),
            "labels_sha256": _file_sha(labels_path),
        },
        "config": config_sections(cfg),
        "outputs": {
            "image": os.path.basename(out_image),
            "labels": os.path.basename(out_labels),
        },
        "drawn": pair.provenance["drawn"],
    }
    _atomic_write_text(out_sidecar, json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    return base


def render_from_sidecar(sidecar_path: str):
    """Re-render the exact sample a provenance sidecar describes.

    Reads the recorded config and inputs, replays generation at the
    recorded (seed, sample index), and returns the SamplePair.  Output
    volumes are bit-identical to the originally written files.
    """
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != SIDECAR_FORMAT:
        raise ConfigError(f"{sidecar_path}: not a {SIDECAR_FORMAT} sidecar")
    cfg = apply_sections(GenerationConfig(), sidecar["config"])
    labels = read_nifti(sidecar["inputs"]["labels"], scheme=LabelScheme.FETA7)
    intensity = read_nifti(sidecar["inputs"]["image"])
    return generate_sample(
        labels, intensity, cfg, sidecar["sample_index"], subject_id=sidecar["subject"]
    )


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    cfg = _load_generation_config(args)
    subjects = discover_subjects(args.in_dir, skip_unreadable=args.skip_unreadable)
    if not subjects:
        raise EmptySample(f"no usable (image, labels) subject pairs in {args.in_dir!r}")
    os.makedirs(args.out, exist_ok=True)

    tasks = [
        (*subjects[i % len(subjects)], cfg, i, args.out)
        for i in range(args.count)
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            names = list(pool.map(_render_task, tasks))
    else:
        names = [_render_task(t) for t in tasks]
    print(f"wrote {len(names)} samples to {args.out} (seed {cfg.master_seed}, mode {cfg.mode.value})")
    return 0


# ---------------------------------------------------------------------------
# bench


def _summaries(per_run: list[dict], wall: list[float]) -> dict:
    stage_names: list[str] = []
    for run in per_run:
        for name in run:
            if name not in stage_names:
                stage_names.append(name)
    stages = {}
    for name in stage_names:
        vals = np.asarray([run.get(name, 0.0) for run in per_run])
        stages[name] = {"median_s": float(np.median(vals)), "p95_s": float(np.percentile(vals, 95))}
    wall_arr = np.asarray(wall)
    median_wall = float(np.median(wall_arr))
    stage_sum = float(np.sum([np.median([r.get(n, 0.0) for r in per_run]) for n in stage_names]))
    return {
        "runs": len(per_run),
        "stages": stages,
        "wall_median_s": median_wall,
        "wall_p95_s": float(np.percentile(wall_arr, 95)),
        "stage_sum_over_wall": stage_sum / median_wall if median_wall > 0 else float("nan"),
        "volumes_per_sec": 1.0 / median_wall if median_wall > 0 else float("inf"),
    }


def _time_pipeline(labels, intensity, cfg, runs: int) -> dict:
    per_run, wall = [], []
    for i in range(runs):
        timings: dict = {}
        t0 = time.perf_counter()
        generate_sample(labels, intensity, cfg, i, subject_id="bench", timings=timings)
        wall.append(time.perf_counter() - t0)
        per_run.append(timings)
    return _summaries(per_run, wall)


def bench_report(labels, intensity, cfg: GenerationConfig, samples: int, epg_samples: int) -> dict:
    """Time the Gaussian-rendering and physics-rendering pipelines."""
    gmm_cfg = replace(cfg, mode=GeneratorMode.FETALSYNTHSEG)
    epg_cfg = replace(cfg, mode=GeneratorMode.RANDFABIAN)
    gmm = _time_pipeline(labels, intensity, gmm_cfg, samples)
    epg = _time_pipeline(labels, intensity, epg_cfg, epg_samples)
    return {
        "grid": list(labels.dims),
        "spacing_mm": [float(s) for s in labels.spacing],
        "gmm": gmm,
        "epg": epg,
        "epg_over_gmm_wall_ratio": epg["wall_median_s"] / gmm["wall_median_s"],
    }


def cmd_bench(args) -> int:
    cfg = _load_generation_config(args)
    subjects = discover_subjects(args.in_dir)
    if not subjects:
        raise EmptySample(f"no usable subject pairs in {args.in_dir!r}")
    sid, image_path, labels_path = subjects[0]
    labels = read_nifti(labels_path, scheme=LabelScheme.FETA7)
    intensity = read_nifti(image_path)

    report = bench_report(labels, intensity, cfg, args.samples, args.epg_samples)
    report["subject"] = sid
    for pipeline in ("gmm", "epg"):
        block = report[pipeline]
        print(f"{pipeline}: median {block['wall_median_s']:.3f} s/volume "
              f"({block['volumes_per_sec']:.2f} volumes/s, {block['runs']} runs)")
        for stage, s in block["stages"].items():
            print(f"  {stage:<12} median {s['median_s']:.3f} s  p95 {s['p95_s']:.3f} s")
    print(f"epg/gmm wall ratio: {report['epg_over_gmm_wall_ratio']:.1f}x")
    if args.out:
        _atomic_write_text(args.out, json.dumps(report, sort_keys=True, indent=2) + "\n")
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# interpolate / evaluate / epg / cluster-inspect


def _parse_alphas(args) -> list[float]:
    if args.alpha is not None and args.alphas is not None:
        raise ConfigError("pass either --alpha or --alphas, not both")
    if args.alpha is not None:
        return [float(args.alpha)]
    if args.alphas is not None:
        try:
            return [float(t) for t in args.alphas.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"--alphas: expected numbers, got {args.alphas!r}") from None
    return list(DEFAULT_SWEEP)


def cmd_interpolate(args) -> int:
    a = read_checkpoint(args.a)
    b = read_checkpoint(args.b)
    alphas = _parse_alphas(args)
    if len(alphas) == 1 and not os.path.isdir(args.out) and args.out.endswith(".ckpt"):
        write_checkpoint(interpolate(a, b, alphas[0]), args.out)
        print(f"wrote {args.out} (alpha {alphas[0]:g})")
        return 0
    os.makedirs(args.out, exist_ok=True)
    for alpha in alphas:
        path = os.path.join(args.out, f"alpha_{alpha:g}.ckpt")
        write_checkpoint(interpolate(a, b, alpha), path)
        print(f"wrote {path}")
    return 0


def read_manifest(path: str):
    """Tab- or comma-separated rows: subject, prediction path, truth path.

    Relative paths resolve against the manifest's directory; blank lines
    and '#' comments are skipped.
    """
    root = os.path.dirname(os.path.abspath(path))
    triples = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split(",")
        parts = [p.strip() for p in parts]
        if len(parts) != 3:
            raise ConfigError(f"{path}:{lineno}: expected 'subject<TAB>pred<TAB>gt', got {line!r}")
        sid, pred, gt = parts
        pred = pred if os.path.isabs(pred) else os.path.join(root, pred)
        gt = gt if os.path.isabs(gt) else os.path.join(root, gt)
        triples.append((sid, pred, gt))
    return triples


def cmd_evaluate(args) -> int:
    triples = read_manifest(args.manifest)
    if not triples:
        raise EmptySample(f"manifest {args.manifest!r} lists no pairs")
    pairs = [
        (sid, read_nifti(pred, scheme=LabelScheme.FETA7), read_nifti(gt, scheme=LabelScheme.FETA7))
        for sid, pred, gt in triples
    ]
    batch = batch_evaluate(pairs)
    text = "\n".join("\t".join(row) for row in report_rows(batch)) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_epg(args) -> int:
    cfg = _load_generation_config(args)
    if cfg.mode not in (GeneratorMode.FABIAN, GeneratorMode.RANDFABIAN):
        cfg = replace(cfg, mode=GeneratorMode.RANDFABIAN)
    if args.labels:
        labels = read_nifti(args.labels, scheme=LabelScheme.FETA7)
    else:
        labels = toy_label_map()
    relax_mode = (
        RelaxometryMode.REFERENCE if cfg.mode is GeneratorMode.FABIAN else RelaxometryMode.RANDOMIZED
    )
    ids = [int(i) for i in np.unique(labels.data) if i != 0]
    seq = draw_sequence(cfg.sequence, make_stream(cfg.master_seed, 0, "sequence"))
    relax = sample_relaxometry(
        relax_mode, cfg.relaxometry, ids, make_stream(cfg.master_seed, 0, "relaxometry")
    )
    image = render_epg_volume(labels, relax, seq, voxelwise=cfg.epg_voxelwise)
    write_nifti(image, args.out)
    print(
        f"wrote {args.out} (refocus {seq.refocus_schedule()[0]:.1f} deg, "
        f"TE_eff {seq.te_eff_ms:.1f} ms, echo {seq.echo_index})"
    )
    return 0


def cmd_cluster_inspect(args) -> int:
    cfg = _load_generation_config(args)
    labels = read_nifti(args.labels, scheme=LabelScheme.FETA7)
    intensity = read_nifti(args.image)
    if cfg.mode is GeneratorMode.SYNTHSEG:
        gen_labels = labels
    else:
        gen_labels = build_meta_classes(labels, intensity)
    per_class = None
    if cfg.mode is not GeneratorMode.SYNTHSEG and cfg.nonbrain_k_range is not None:
        per_class = {4: cfg.nonbrain_k_range}
    rng = make_stream(cfg.master_seed, 0, "subclass")
    part = split_meta_classes(gen_labels, intensity, cfg.k_range, rng, k_range_by_class=per_class)

    out_map = f"{args.out_prefix}_subclasses.nii.gz"
    write_nifti(part.subclass_map, out_map)
    summary = {
        "mode": cfg.mode.value,
        "master_seed": cfg.master_seed,
        "n_subclasses": part.n_subclasses,
        "k_by_class": {str(k): v for k, v in sorted(part.k_by_class.items())},
        "fits": {
            str(cls): {
                "k": fit.k,
                "means": [float(v) for v in fit.means],
                "variances": [float(v) for v in fit.variances],
                "weights": [float(v) for v in fit.weights],
                "log_likelihood": fit.log_likelihood,
                "n_iter": fit.n_iter,
                "converged": fit.converged,
            }
            for cls, fit in sorted(part.fits.items())
        },
    }
    out_json = f"{args.out_prefix}_fit.json"
    _atomic_write_text(out_json, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out_map} and {out_json} ({part.n_subclasses} subclasses)")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drsynth",
        description="Domain-randomized synthesis of MR-like volumes from tissue label maps.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    modes = [m.value for m in GeneratorMode]
    profiles = [p.value for p in AugmentProfile]

    def add_common(p, seed=True):
        p.add_argument("--config", help="INI config file (defaults used when omitted)")
        if seed:
            p.add_argument("--seed", type=int, help="master seed (overrides config)")

    g = sub.add_parser("generate", help="render randomized samples from (image, labels) subjects")
    add_common(g)
    g.add_argument("--in", dest="in_dir", required=True, help="directory of *_image/*_labels NIfTI pairs")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--count", type=int, default=1, help="number of samples (round-robin over subjects)")
    g.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    g.add_argument("--mode", choices=modes, help="contrast/partition mode (overrides config)")
    g.add_argument("--profile", choices=profiles, help="augmentation profile (overrides config)")
    g.add_argument(
        "--skip-unreadable",
        action="store_true",
        help="skip unreadable subject pairs instead of aborting",
    )
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bench", help="time the generation pipelines on one subject")
    add_common(b)
    b.add_argument("--in", dest="in_dir", required=True, help="directory with at least one subject pair")
    b.add_argument("--samples", type=int, default=10, help="Gaussian-pipeline runs to time")
    b.add_argument("--epg-samples", type=int, default=2, help="physics-pipeline runs to time")
    b.add_argument("--out", help="also write the report as JSON")
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("interpolate", help="blend two checkpoints")
    i.add_argument("a", help="first checkpoint (alpha 0)")
    i.add_argument("b", help="second checkpoint (alpha 1)")
    i.add_argument("--alpha", type=float, help="single blend coefficient")
    i.add_argument("--alphas", help="comma-separated sweep (default 0,0.2,0.5,0.8,1)")
    i.add_argument("--out", required=True, help=".ckpt path for one alpha, directory for a sweep")
    i.set_defaults(func=cmd_interpolate)

    e = sub.add_parser("evaluate", help="score predictions against ground truth")
    e.add_argument("--manifest", required=True, help="rows: subject<TAB>pred<TAB>gt")
    e.add_argument("--out", help="report path (stdout when omitted)")
    e.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("epg", help="render a spin-echo volume from a label map")
    add_common(p)
    p.add_argument("--labels", help="label map NIfTI (built-in toy map when omitted)")
    p.add_argument("--mode", choices=["fabian", "randfabian"], help="relaxometry source")
    p.add_argument("--out", required=True, help="output NIfTI path")
    p.set_defaults(func=cmd_epg)

    c = sub.add_parser("cluster-inspect", help="partition one subject into intensity subclasses")
    add_common(c)
    c.add_argument("--image", required=True, help="intensity NIfTI")
    c.add_argument("--labels", required=True, help="tissue label NIfTI")
    c.add_argument("--mode", choices=modes, help="partition mode (overrides config)")
    c.add_argument("--out-prefix", required=True, help="prefix for _subclasses.nii.gz and _fit.json")
    c.set_defaults(func=cmd_cluster_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DrsynthError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
