"""Command line front end: one subcommand per pipeline stage plus ``run``.

Stages talk to each other only through files, so ``gei``, ``motion``,
``segment``, ``train`` and ``eval`` chained by hand produce the same report as
``run``. Settings come from built-in defaults, then from a ``key=value`` file
given with ``--config``, then from command line flags, later sources winning.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import pipeline as pl
from .dataio import (
    CASIA_ANGLES,
    TEST_ROLES,
    DataError,
    ManifestEntry,
    Role,
    load_entry,
    parallel_map,
    read_manifest,
    write_manifest,
)
from .motion import load_motion_matrix, save_motion_matrix
from .recognition import (
    cross_view_matrix,
    evaluate_ccr,
    export_model_csv,
    fit_cda,
    load_model,
    save_matrix_csv,
    save_model,
)
from .segmentation import load_partition, save_partition, save_path_csv
from .synth import SyntheticConfig, generate
from .templates import TemplateKind, load_template_csv, save_template_csv, save_template_pgm
from .viewfree import PoseEstimator, fit_view_models, pose_confusion, save_confusion_csv, view_free_ccr

log = logging.getLogger("gaitseg")

MODES = ("conditions", "cross-view", "pose", "all")
REPORT_HEADER = "condition,angle_train,angle_test,ccr,n_test\n"


class StageError(Exception):
    """Failure attributed to one named pipeline stage."""

    def __init__(self, stage, message):
        super().__init__(f"{stage} stage: {message}")
        self.stage = stage


class _Stage:
    """Context manager turning data and file errors into a :class:`StageError`."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and isinstance(exc, (DataError, OSError, ValueError, KeyError)) and not isinstance(exc, StageError):
            raise StageError(self.name, str(exc)) from exc
        return False


def stage(name):
    return _Stage(name)


# --- configuration --------------------------------------------------------


def parse_size(text):
    """``"64x64"`` or ``"64"`` to ``(height, width)``."""
    parts = str(text).lower().replace(",", "x").split("x")
    try:
        dims = tuple(int(p) for p in parts if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad image size {text!r}") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < 8:
        raise argparse.ArgumentTypeError(f"bad image size {text!r}")
    return dims


def parse_angles(text):
    try:
        angles = tuple(int(a) for a in str(text).split(",") if a.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad angle list {text!r}") from None
    bad = [a for a in angles if a not in CASIA_ANGLES]
    if bad or not angles:
        raise argparse.ArgumentTypeError(f"angles must be drawn from {CASIA_ANGLES}, got {text!r}")
    return angles


def parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path):
    """``key=value`` lines; ``#`` comments and blank lines are ignored; dashes equal underscores."""
    path = Path(path)
    if not path.is_file():
        raise StageError("config", f"config file {path} does not exist")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise StageError("config", f"{path}:{lineno}: expected key=value")
        key, value = (x.strip() for x in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


@dataclass
class RunConfig:
    manifest: Path
    out_dir: Path
    kind: TemplateKind = TemplateKind.GEI
    size: tuple = (64, 64)
    L: int = 5
    bag_size: int = 45
    k_max: int = pl.DEFAULT_K_MAX
    seed: int = 0
    top_k: int = pl.DEFAULT_TOP_K
    weighted: bool = True
    n_pca: int = None
    n_lda: int = None
    angle: int = 90
    mode: str = "conditions"
    workers: int = None

    def check(self):
        if not Path(self.manifest).is_file():
            raise StageError("config", f"manifest {self.manifest} does not exist")
        if self.mode not in MODES:
            raise StageError("config", f"mode must be one of {MODES}")
        return self

    @property
    def segment_params(self):
        return pl.SegmentParams(self.L, self.bag_size, self.k_max, self.seed, self.top_k, self.weighted)


# --- stage helpers ---------------------------------------------------------


def _template_name(entry, counter):
    key = (entry.subject_id, entry.condition, entry.view_angle_deg, entry.role)
    counter[key] = counter.get(key, 0) + 1
    return f"{entry.subject_id}_{entry.condition.value}_{entry.view_angle_deg:03d}_{entry.role.value}_{counter[key]:02d}"


def build_template_files(manifest_path, out_dir, kind=TemplateKind.GEI, size=(64, 64), workers=None, pgm=True):
    """Templates for every manifest entry as CSV (and PGM) plus ``templates.csv``.

    Returns the template manifest path and the in-memory labelled templates.
    """
    manifest = read_manifest(manifest_path)
    if not manifest.entries:
        raise DataError(f"manifest {manifest_path} has no entries")
    sequences = parallel_map(lambda e: load_entry(manifest, e), manifest.entries, workers)
    templates = pl.build_templates(sequences, [e.role for e in manifest.entries], kind, size, workers)
    fallbacks = sum(t.cycle_fallback for t in templates)
    if fallbacks:
        log.warning("%d of %d sequences used the whole sequence (no clear gait period)", fallbacks, len(templates))

    out_dir = Path(out_dir)
    tdir = out_dir / "templates"
    entries, counter = [], {}
    for entry, tmpl in zip(manifest.entries, templates):
        name = _template_name(entry, counter)
        save_template_csv(tmpl.template, tdir / f"{name}.csv")
        if pgm:
            save_template_pgm(tmpl.template, tdir / f"{name}.pgm")
        entries.append(ManifestEntry(f"templates/{name}.csv", entry.subject_id, entry.condition, entry.view_angle_deg, entry.role))
    return write_manifest(out_dir / "templates.csv", entries), templates


def load_template_files(path, roles=None):
    manifest = read_manifest(path)
    out = []
    for e in manifest.entries:
        if roles is not None and e.role not in roles:
            continue
        out.append(pl.LabeledTemplate(load_template_csv(manifest.resolve(e)), e.subject_id, e.condition, e.view_angle_deg, e.role))
    return out


def format_report(reports):
    lines = [REPORT_HEADER]
    for r in reports:
        lines.append(f"{r.condition.value},{r.angle_train},{r.angle_test},{r.ccr:.6f},{r.n_test}\n")
    return "".join(lines)


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _rows(partition):
    return None if partition is None else partition.selected_rows()


def _angles_present(templates, roles):
    roles = set(roles)
    return tuple(a for a in CASIA_ANGLES if any(t.role in roles and t.view_angle_deg == a for t in templates))


def segment_stage(motion, out_dir, params, workers=None):
    partition = pl.partition_from_motion(motion, params, workers)
    out_dir = Path(out_dir)
    save_partition(partition, out_dir / "partition.txt")
    save_path_csv(partition.runs, out_dir / "path.csv")
    lo, hi = partition.selected_range() if partition.selected.any() else (None, None)
    log.info("boundaries %s, selected rows %s-%s", partition.boundaries, lo, hi)
    return partition


def train_stage(templates, partition, angle, n_pca=None, n_lda=None):
    train = pl.by_role(templates, Role.TRAIN, angle)
    if not train:
        raise DataError(f"no training templates at view {angle}")
    return fit_cda(pl.feature_set(train, _rows(partition)), n_pca=n_pca, n_lda=n_lda)


def eval_stage(model, templates, partition, angle_train, angle_test):
    rows = _rows(partition)
    reports = []
    for role in TEST_ROLES:
        test = pl.by_role(templates, role, angle_test)
        if not test:
            continue
        features = pl.feature_set(test, rows)
        if features.X.shape[1] != model.input_dim:
            raise DataError(f"test features have {features.X.shape[1]} values but the model expects {model.input_dim}")
        reports.append(pl.ConditionReport(role, angle_train, angle_test, evaluate_ccr(model, features), len(test)))
    if not reports:
        raise DataError(f"no test templates at view {angle_test}")
    return reports


def cross_view_stage(templates, partition, out_dir, prefix="crossview", n_pca=None, n_lda=None, workers=None):
    angles = _angles_present(templates, [Role.TRAIN])
    paths = []
    for role in TEST_ROLES:
        test_angles = _angles_present(templates, [role])
        if test_angles != angles:
            continue
        train_fs = pl.features_by_angle(templates, Role.TRAIN, _rows(partition), angles)
        test_fs = pl.features_by_angle(templates, role, _rows(partition), angles)
        matrix = cross_view_matrix(train_fs, test_fs, angles, n_pca, n_lda, workers)
        paths.append(save_matrix_csv(100.0 * matrix, angles, Path(out_dir) / f"{prefix}_{role.value}.csv"))
    if not paths:
        raise DataError("no test role covers the training views")
    return paths


def pose_stage(templates, partition, out_dir, n_pca=None, n_lda=None):
    angles = _angles_present(templates, [Role.TRAIN])
    rows = _rows(partition)
    train_fs = pl.features_by_angle(templates, Role.TRAIN, rows, angles)
    estimator = PoseEstimator.from_views(train_fs, required=angles)
    tests = [t for t in templates if t.role in TEST_ROLES and t.view_angle_deg in angles]
    if not tests:
        raise DataError("no test templates at the training views")
    test_fs = pl.feature_set(tests, rows)
    confusion = pose_confusion(estimator, test_fs, angles)
    out_dir = Path(out_dir)
    conf_path = save_confusion_csv(confusion, out_dir / "pose_confusion.csv", angles)

    models = fit_view_models(train_fs, angles, n_pca, n_lda)
    lines = ["condition,estimated_ccr,oracle_ccr,n_test\n"]
    for role in TEST_ROLES:
        mask = [t.role == role for t in tests]
        if not any(mask):
            continue
        sub = test_fs.subset(mask)
        est = view_free_ccr(estimator, models, sub)
        orc = view_free_ccr(estimator, models, sub, oracle_views=True)
        lines.append(f"{role.value},{est:.6f},{orc:.6f},{len(sub)}\n")
    report = write_text(out_dir / "viewfree.csv", "".join(lines))
    return conf_path, report


# --- full pipeline --------------------------------------------------------


def run_pipeline(config):
    """Every stage in order; returns a dict of the written artifact paths."""
    config.check()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    art = {}
    with stage("gei"):
        art["templates"], templates = build_template_files(config.manifest, out, config.kind, config.size, config.workers)
    with stage("motion"):
        motion = pl.validation_motion(pl.by_role(templates, Role.VALIDATION, config.angle), config.workers)
        art["motion"], _ = save_motion_matrix(motion, out / "motion.csv")
    with stage("segment"):
        partition = segment_stage(motion, out, config.segment_params, config.workers)
        art["partition"] = out / "partition.txt"
        art["path"] = out / "path.csv"
    # reload so the in-memory partition is exactly what a chained run would see
    partition = load_partition(art["partition"])
    with stage("train"):
        model = train_stage(templates, partition, config.angle, config.n_pca, config.n_lda)
        art["model"] = save_model(model, out / "model.bin")
        whole = train_stage(templates, None, config.angle, config.n_pca, config.n_lda)
    with stage("evaluate"):
        reports = eval_stage(model, templates, partition, config.angle, config.angle)
        baseline = eval_stage(whole, templates, None, config.angle, config.angle)
        art["report"] = write_text(out / "report.csv", format_report(reports))
        art["summary"] = write_text(
            out / "summary.txt",
            pl.summary_table({"Part-selected GEI": reports, "Whole GEI": baseline}),
        )
    if config.mode in ("cross-view", "all"):
        with stage("cross-view"):
            art["cross_view"] = cross_view_stage(templates, partition, out, n_pca=config.n_pca, n_lda=config.n_lda, workers=config.workers)
    if config.mode in ("pose", "all"):
        with stage("pose-eval"):
            art["pose_confusion"], art["viewfree"] = pose_stage(templates, partition, out, config.n_pca, config.n_lda)
    return art


# --- argument parsing -------------------------------------------------------


def _common(p):
    p.add_argument("--config", type=Path, help="key=value settings file; flags override it")
    p.add_argument("--workers", type=int, help="threads for batch work (default: GAITSEG_WORKERS or serial)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _seg_args(p):
    p.add_argument("--L", "--runs", dest="L", type=int, default=5, help="number of bagging runs")
    p.add_argument("--bag-size", type=int, default=45, help="validation GEIs per run")
    p.add_argument("--k-max", type=int, default=pl.DEFAULT_K_MAX, help="change points per run")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=int, default=pl.DEFAULT_TOP_K, help="parts kept by the selection rule")
    p.add_argument("--weighted", type=parse_bool, default=True, help="position-weighted LARS (default true)")


def _cda_args(p):
    p.add_argument("--n-pca", type=int, help="PCA components (default 2 x classes, clipped to the data rank)")
    p.add_argument("--n-lda", type=int, help="LDA axes (default classes - 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="gaitseg", description="Body-part-selective gait recognition.")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="write a synthetic silhouette dataset")
    _common(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--subjects", type=int, default=SyntheticConfig.n_subjects)
    p.add_argument("--cycles", type=int, default=SyntheticConfig.n_cycles_per_subject, help="normal passes per subject")
    p.add_argument("--validation-subjects", type=int, default=SyntheticConfig.n_validation_subjects)
    p.add_argument("--frames-per-cycle", type=int, default=SyntheticConfig.frames_per_cycle)
    p.add_argument("--noise", type=float, default=SyntheticConfig.noise_flip_prob, help="pixel flip probability")
    p.add_argument("--views", type=parse_angles, default=SyntheticConfig.view_angles, help="comma-separated angles")
    p.add_argument("--seed", type=int, default=SyntheticConfig.seed)

    p = sub.add_parser("gei", help="compute templates for a sequence manifest")
    _common(p)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path, help="directory for templates/ and templates.csv")
    p.add_argument("--kind", type=TemplateKind.parse, default=TemplateKind.GEI, help="GEI, GEnI or GPPE")
    p.add_argument("--size", type=parse_size, default=(64, 64), help="HxW, default 64x64")
    p.add_argument("--no-pgm", dest="pgm", action="store_false", help="skip the PGM previews")

    p = sub.add_parser("motion", help="motion matrix of the validation templates")
    _common(p)
    p.add_argument("--templates", type=Path)
    p.add_argument("--out", type=Path, help="motion matrix CSV")
    p.add_argument("--role", type=Role.parse, default=Role.VALIDATION)
    p.add_argument("--angle", type=int, default=90)

    p = sub.add_parser("segment", help="bagged change-point segmentation and part selection")
    _common(p)
    p.add_argument("--motion", type=Path)
    p.add_argument("--out", type=Path, help="directory for partition.txt and path.csv")
    _seg_args(p)

    p = sub.add_parser("train", help="fit the CDA model on training templates")
    _common(p)
    p.add_argument("--templates", type=Path)
    p.add_argument("--partition", type=Path, help="partition file; omit for the whole template")
    p.add_argument("--out", type=Path, help="model file")
    p.add_argument("--angle", type=int, default=90)
    p.add_argument("--export-csv", type=Path, help="also dump model matrices to this directory")
    _cda_args(p)

    p = sub.add_parser("eval", help="score test templates with a trained model")
    _common(p)
    p.add_argument("--templates", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--partition", type=Path)
    p.add_argument("--out", type=Path, help="report CSV")
    p.add_argument("--angle-train", type=int, default=90)
    p.add_argument("--angle-test", type=int, default=90)

    p = sub.add_parser("cross-view", help="train at every view, test at every view")
    _common(p)
    p.add_argument("--templates", type=Path)
    p.add_argument("--partition", type=Path)
    p.add_argument("--out", type=Path, help="output directory")
    _cda_args(p)

    p = sub.add_parser("pose-eval", help="view estimation confusion and view-free recognition")
    _common(p)
    p.add_argument("--templates", type=Path)
    p.add_argument("--partition", type=Path)
    p.add_argument("--out", type=Path, help="output directory")
    _cda_args(p)

    p = sub.add_parser("run", help="full pipeline: gei, motion, segment, train, eval")
    _common(p)
    p.add_argument("--manifest", type=Path, help="sequence manifest")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--kind", type=TemplateKind.parse, default=TemplateKind.GEI)
    p.add_argument("--size", type=parse_size, default=(64, 64))
    p.add_argument("--angle", type=int, default=90, help="view for validation, training and testing")
    p.add_argument("--mode", choices=MODES, default="conditions")
    _seg_args(p)
    _cda_args(p)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with config-file values installed as subcommand defaults."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    values = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        key = {"out_dir": "out", "runs": "L", "l": "L"}.get(key, key)
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise StageError("config", f"unknown setting {key!r} for {args.command}")
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError, DataError) as exc:
            raise StageError("config", f"bad value for {key}: {exc}") from None
        if action.choices is not None and defaults[key] not in action.choices:
            raise StageError("config", f"{key} must be one of {list(action.choices)}")
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


REQUIRED = {
    "synth": ("out",),
    "gei": ("manifest", "out"),
    "motion": ("templates", "out"),
    "segment": ("motion", "out"),
    "train": ("templates", "out"),
    "eval": ("templates", "model", "out"),
    "cross-view": ("templates", "out"),
    "pose-eval": ("templates", "out"),
    "run": ("manifest", "out"),
}


def _require(args):
    missing = [f"--{n.replace('_', '-')}" for n in REQUIRED[args.command] if getattr(args, n, None) is None]
    if missing:
        raise StageError("config", f"{args.command} needs {', '.join(missing)} (flag or config file)")


def _partition_arg(path):
    return None if path is None else load_partition(path)


def dispatch(args):
    _require(args)
    cmd = args.command
    if cmd == "synth":
        with stage("synth"):
            cfg = SyntheticConfig(
                n_subjects=args.subjects,
                n_cycles_per_subject=args.cycles,
                n_validation_subjects=args.validation_subjects,
                frames_per_cycle=args.frames_per_cycle,
                noise_flip_prob=args.noise,
                view_angles=tuple(args.views),
                seed=args.seed,
            )
            print(generate(cfg, args.out))
    elif cmd == "gei":
        with stage("gei"):
            path, _ = build_template_files(args.manifest, args.out, args.kind, args.size, args.workers, args.pgm)
            print(path)
    elif cmd == "motion":
        with stage("motion"):
            templates = load_template_files(args.templates, {args.role})
            motion = pl.validation_motion([t for t in templates if t.view_angle_deg == args.angle], args.workers)
            print(save_motion_matrix(motion, args.out)[0])
    elif cmd == "segment":
        with stage("segment"):
            params = pl.SegmentParams(args.L, args.bag_size, args.k_max, args.seed, args.top_k, args.weighted)
            partition = segment_stage(load_motion_matrix(args.motion), args.out, params, args.workers)
            print(",".join(str(b) for b in partition.boundaries))
    elif cmd == "train":
        with stage("train"):
            templates = load_template_files(args.templates, {Role.TRAIN})
            model = train_stage(templates, _partition_arg(args.partition), args.angle, args.n_pca, args.n_lda)
            print(save_model(model, args.out))
            if args.export_csv:
                export_model_csv(model, args.export_csv)
    elif cmd == "eval":
        with stage("evaluate"):
            templates = load_template_files(args.templates, set(TEST_ROLES))
            model = load_model(args.model)
            reports = eval_stage(model, templates, _partition_arg(args.partition), args.angle_train, args.angle_test)
            write_text(args.out, format_report(reports))
            sys.stdout.write(pl.summary_table({"CCR": reports}))
    elif cmd == "cross-view":
        with stage("cross-view"):
            templates = load_template_files(args.templates)
            for p in cross_view_stage(templates, _partition_arg(args.partition), args.out, n_pca=args.n_pca, n_lda=args.n_lda, workers=args.workers):
                print(p)
    elif cmd == "pose-eval":
        with stage("pose-eval"):
            templates = load_template_files(args.templates)
            for p in pose_stage(templates, _partition_arg(args.partition), args.out, args.n_pca, args.n_lda):
                print(p)
    elif cmd == "run":
        config = RunConfig(
            args.manifest, args.out, args.kind, args.size, args.L, args.bag_size, args.k_max, args.seed,
            args.top_k, args.weighted, args.n_pca, args.n_lda, args.angle, args.mode, args.workers,
        )
        art = run_pipeline(config)
        sys.stdout.write(Path(art["summary"]).read_text())
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2),
            format="%(levelname)s %(name)s: %(message)s",
        )
        return dispatch(args)
    except StageError as exc:
        print(f"gaitseg: error in {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
