"""Command-line entry point: ``breastssm <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 invalid input
data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .apps import EditMap, edit, fit_edit_map, posterior_predict, read_feature_csv
from .casap import CasapConfig, write_diagnostics
from .errors import BreastSSMError, ConfigError
from .io import load_mesh, save_mesh
from .metrics import model_curves, registration_mse, write_curves
from .model import as_points, build, gpa, load_model, reconstruct, sample, save_model
from .multires import PipelineConfig, run_pipeline
from .rigid import RigidConfig
from .synth import BREAST_MODES, THORAX_MODES, SubjectParams, Variation, generate_dataset, write_dataset

logger = logging.getLogger("breastssm")

MESH_SUFFIXES = (".ply", ".obj")


# ---------------------------------------------------------------------------
# configuration


def _dataclass_from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def pipeline_config(data: dict | None) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from a JSON-style dict.

    Sections ``rigid``, ``initial``, ``coarse`` and ``fine`` map to
    :class:`RigidConfig` / :class:`CasapConfig`; ``rigid: null`` skips the
    rigid step. Remaining top-level keys are pipeline fields.
    """
    data = dict(data or {})
    kwargs = {}
    if "rigid" in data:
        r = data.pop("rigid")
        kwargs["rigid"] = None if r is None else _dataclass_from_dict(RigidConfig, r, "rigid")
    for stage in ("initial", "coarse", "fine"):
        if stage in data:
            base = getattr(PipelineConfig(), stage)
            merged = {f.name: getattr(base, f.name) for f in fields(CasapConfig)}
            section = data.pop(stage)
            if not isinstance(section, dict):
                raise ConfigError(f"{stage}: expected an object")
            merged.update(section)
            kwargs[stage] = _dataclass_from_dict(CasapConfig, merged, stage)
    cfg = _dataclass_from_dict(PipelineConfig, {**data, **kwargs}, "config")
    return cfg


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# helpers


def _mesh_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"{d}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in MESH_SUFFIXES)
    if not files:
        raise ConfigError(f"{d}: no .ply or .obj meshes found")
    return files


def _load_shapes(directory):
    files = _mesh_files(directory)
    meshes = [load_mesh(f) for f in files]
    faces = meshes[0].faces
    for f, m in zip(files, meshes):
        if not np.array_equal(m.faces, faces):
            raise ConfigError(f"{f}: topology differs from {files[0].name}; register all shapes to one template")
    return files, meshes


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def _read_index_list(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = _load_json(path)
        if isinstance(data, dict):
            data = data.get("indices", data.get("missing"))
        if not isinstance(data, list):
            raise ConfigError(f"{path}: expected a JSON list of vertex indices")
        return np.asarray(data, dtype=np.int64)
    if path.suffix.lower() == ".ply":
        from .io import read_ply

        _, _, extra = read_ply(path)
        for key in ("missing", "flag", "quality"):
            if key in extra:
                return np.nonzero(extra[key] > 0.5)[0]
        raise ConfigError(f"{path}: PLY mask needs a 'missing', 'flag' or 'quality' vertex property")
    raise ConfigError(f"{path}: mask must be .json or .ply")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    if args.k < 1:
        raise ConfigError("-k must be at least 1")
    modes = list(BREAST_MODES) + (list(THORAX_MODES) if args.thorax else [])
    pose = {"scale": 0.05, "angle_x": np.radians(10.0), "translation": 8.0} if args.pose else {}
    base = SubjectParams(n_theta=args.n_theta, n_height=args.n_height)
    subjects = generate_dataset(args.k, Variation(modes=modes, pose=pose), seed=args.seed, base=base)
    path = write_dataset(subjects, args.out, seed=args.seed, binary=args.binary)
    print(f"wrote {len(subjects)} subjects to {path.parent}")
    return 0


def _register_one(job):
    template_path, target_path, out_dir, cfg_dict, use_masks, tpl_lm, tgt_lm = job
    template = load_mesh(template_path, landmarks=tpl_lm)
    target = load_mesh(target_path, landmarks=tgt_lm)
    cfg = pipeline_config(cfg_dict)
    if not use_masks:
        cfg.use_masks = False
    result = run_pipeline(template, target, cfg)
    out = Path(out_dir)
    stem = Path(target_path).stem
    save_mesh(result.mesh, out / f"{stem}.ply", binary=True)
    write_diagnostics(result.diagnostics, out / f"{stem}.diagnostics.csv")
    mse = registration_mse(result.mesh, target)
    report = {"target": str(target_path), "mse_mm2": mse, "use_masks": cfg.use_masks,
              "rigid": result.rigid.transform.to_dict() if result.rigid else None,
              "stages": [{"name": s.name, "rows": len(s.trace), "final_energy": s.final_energy}
                         for s in result.stages]}
    with open(out / f"{stem}.report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    return stem, mse


def cmd_register(args):
    cfg_dict = _load_json(args.config) if args.config else {}
    pipeline_config(cfg_dict)  # validate before spawning workers
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = Path(args.target)
    targets = _mesh_files(target) if target.is_dir() else [target]
    if args.target_landmarks and len(targets) > 1:
        raise ConfigError("--target-landmarks applies to a single target mesh")
    jobs = [(args.template, t, out, cfg_dict, not args.no_masks, args.template_landmarks, args.target_landmarks)
            for t in targets]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_register_one, jobs))
    else:
        results = [_register_one(j) for j in jobs]
    for stem, mse in results:
        print(f"{stem}: MSE {mse:.6g} mm^2")
    return 0


def cmd_build(args):
    files, meshes = _load_shapes(args.registered)
    target = None if args.variance == "all" else float(args.variance)
    aligned = gpa([m.vertices for m in meshes])
    model = build(aligned.aligned, meshes[0].faces, variance_target=target, landmarks=meshes[0].landmarks)
    save_model(model, args.out)
    print(f"model with {model.q} components ({model.retained_variance:.4f} of the variance) from {len(files)} shapes")
    return 0


def _save_shape(model, vector, path):
    save_mesh(model.mesh(vector), path, binary=True)


def cmd_sample(args):
    model = load_model(args.model)
    alpha = _parse_floats(args.alpha) if args.alpha else []
    if args.sd:
        alpha = list(np.asarray(alpha) * np.sqrt(model.eigenvalues[:len(alpha)]))
    _save_shape(model, sample(model, alpha, clamp=args.clamp), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_reconstruct(args):
    model = load_model(args.model)
    mesh = load_mesh(args.mesh)
    alpha = reconstruct(model, mesh.vertices, align=not args.no_align)
    if args.components:
        alpha = alpha[:args.components]
    Path(args.out).write_text(json.dumps({"alpha": alpha.tolist()}, indent=2))
    if args.mesh_out:
        _save_shape(model, sample(model, alpha), args.mesh_out)
    print(f"wrote {args.out}")
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    mesh = load_mesh(args.mesh)
    missing = _read_index_list(args.mask)
    pred = posterior_predict(model, mesh.vertices, missing, sigma2=args.sigma2, align=not args.no_align)
    save_mesh(mesh.with_vertices(as_points(pred)), args.out, binary=True)
    print(f"wrote {args.out}")
    return 0


def cmd_edit(args):
    model = load_model(args.model)
    files, meshes = _load_shapes(args.training)
    ids, features = read_feature_csv(args.features)
    stems = [f.stem for f in files]
    missing = [i for i in ids if i not in stems]
    if missing:
        raise ConfigError(f"feature table names unknown subject(s): {', '.join(missing)}")
    A = np.stack([reconstruct(model, meshes[stems.index(i)].vertices, align=True) for i in ids], axis=1)
    emap: EditMap = fit_edit_map(A, features)
    deltas = np.zeros(features.n_features)
    for item in args.delta:
        name, _, value = item.partition("=")
        if name not in features.names:
            raise ConfigError(f"unknown feature {name!r}; have {', '.join(features.names)}")
        deltas[features.names.index(name)] = float(value)
    if args.subject not in stems:
        raise ConfigError(f"unknown subject {args.subject!r}")
    alpha = reconstruct(model, meshes[stems.index(args.subject)].vertices, align=True)
    edited = edit(model, emap, alpha, deltas)
    _save_shape(model, sample(model, edited), args.out)
    print(f"wrote {args.out} (feature map rank {emap.rank})")
    return 0


def cmd_evaluate(args):
    files, meshes = _load_shapes(args.registered)
    shapes = gpa([m.vertices for m in meshes]).aligned
    model = build(shapes, meshes[0].faces)
    rows = model_curves(model, shapes, samples=args.samples, seed=args.seed)
    write_curves(rows, args.out)
    for r in rows:
        print(f"m={r['m']}: compactness {r['compactness']:.6f}  generalization {r['generalization']:.6g} mm  "
              f"specificity {r['specificity']:.6g} mm")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="breastssm", description="Mask-weighted breast shape model toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("-k", type=int, required=True, help="number of subjects")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--thorax", action="store_true", help="also vary the thorax outside the bumps")
    s.add_argument("--pose", action="store_true", help="apply random similarity jitter")
    s.add_argument("--n-theta", type=int, default=41)
    s.add_argument("--n-height", type=int, default=41)
    s.add_argument("--binary", action="store_true", help="write binary PLY")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("register", help="rigid + coarse-to-fine non-rigid registration")
    s.add_argument("template")
    s.add_argument("target", help="target mesh or a directory of meshes")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON file with pipeline settings")
    s.add_argument("--template-landmarks")
    s.add_argument("--target-landmarks")
    s.add_argument("--no-masks", action="store_true", help="unit confidence everywhere (ablation)")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("build", help="GPA + PCA over registered meshes")
    s.add_argument("registered")
    s.add_argument("--variance", default="all", help="retained variance fraction or 'all'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("sample", help="instantiate the model at given coefficients")
    s.add_argument("model")
    s.add_argument("--alpha", default="", help="comma-separated coefficients (mm)")
    s.add_argument("--sd", action="store_true", help="coefficients are in standard deviations")
    s.add_argument("--clamp", action="store_true", help="clip to +-3 standard deviations")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("reconstruct", help="project a registered mesh onto the model")
    s.add_argument("model")
    s.add_argument("mesh")
    s.add_argument("--components", type=int)
    s.add_argument("--no-align", action="store_true")
    s.add_argument("--out", required=True, help="JSON coefficient file")
    s.add_argument("--mesh-out")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("predict", help="complete a missing region from the rest of the shape")
    s.add_argument("model")
    s.add_argument("mesh")
    s.add_argument("--mask", required=True, help="JSON list of missing vertex indices or flagged PLY")
    s.add_argument("--sigma2", type=float, default=1.0)
    s.add_argument("--no-align", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("edit", help="change named features of a training subject")
    s.add_argument("model")
    s.add_argument("--training", required=True, help="directory of registered training meshes")
    s.add_argument("--features", required=True, help="CSV: subject id, feature columns")
    s.add_argument("--subject", required=True)
    s.add_argument("--delta", action="append", default=[], help="name=value, repeatable")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_edit)

    s = sub.add_parser("evaluate", help="compactness / generalization / specificity curves")
    s.add_argument("registered")
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BreastSSMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
