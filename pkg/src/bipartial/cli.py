"""Command-line interface: ``bipartial {cluster,sweep,verify,oracle,gen}``.

Settings come from built-in defaults, then an optional ``key=value`` config
file (``--config``), then command-line flags, later sources winning.

Exit codes: 0 success, 1 bad input or configuration, 2 invariant
violation, 3 internal error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .core import (
    DataTable,
    ProximityTransform,
    apply_transform,
    build_store,
    format_float,
    partition_at_step,
    read_data_csv,
    read_matrix_csv,
    write_data_csv,
)
from .datasets import four_tight_pairs, make_nested_blobs, single_gaussian, uniform_points
from .engine import envelope_report, run_bipartial, select_partition
from .exceptions import (
    BipartialError,
    ConfigurationError,
    InputError,
    InvariantViolation,
    ObjectiveContractError,
)
from .kmeans import (
    bipartial_kmeans_objective,
    hybrid_two_stage,
    kmeans_classic,
    kmeans_sweep,
    resolve_offset,
    run_bipartial_kmeans,
    select_bipartial_kmeans,
)
from .linkage import SCHEMES, height_inversions, run_linkage
from .objectives import facility_stop_step, make_objective
from .oracle import HARD_MAX_N, ObjectiveSpec, oracle_best
from .verify import gap_study, verify_history

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_INTERNAL = 0, 1, 2, 3

ALGORITHMS = ("linkage", "bipartial", "kmeans", "hybrid")
ENGINE_OBJECTIVES = ("additive", "facility", "minmax", "avg_additive", "bipartial_kmeans")

# key -> (type, default). ``None`` defaults mean "not set".
CONFIG_KEYS = {
    "input": (str, None),
    "format": (str, "table"),
    "output_dir": (str, "out"),
    "algorithm": (str, "bipartial"),
    "objective": (str, "additive"),
    "metric": (str, "euclidean"),
    "transform": (str, "average_preserving"),
    "transform.c": (float, None),
    "transform.ratio": (float, None),
    "linkage.scheme": (str, "upgma"),
    "linkage.n_clusters": (int, 2),
    "facility.cost": (str, "centroid"),
    "facility.scale": (float, 1.0),
    "kmeans.p": (int, None),
    "kmeans.p_min": (int, 1),
    "kmeans.p_max": (int, 10),
    "kmeans.restarts": (int, 20),
    "kmeans.seed": (int, 0),
    "kmeans.metric": (str, "squared_euclidean"),
    "kmeans.seeding": (str, "farthest_point"),
    "hybrid.first_stage_p": (int, None),
    "bipartial.outer_weight": (float, 0.5),
    "bipartial.outer_scope": (str, "partition"),
    "output.height": (str, "r"),
    "oracle.max_n": (int, 12),
    "oracle.r": (float, 0.5),
    "n_jobs": (int, 1),
}

# settings that change how a run executes but never what it produces
EXECUTION_ONLY = ("n_jobs", "output_dir")


def _convert(key, raw):
    typ, _ = CONFIG_KEYS[key]
    if raw is None or isinstance(raw, typ):
        return raw
    try:
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"config key {key!r}: cannot read {raw!r} as {typ.__name__}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _convert(key, value)
    return out


@dataclass
class RunConfig:
    """All settings of a run, keyed by their config-file names."""

    values: dict

    @classmethod
    def build(cls, file_values=None, flag_values=None) -> "RunConfig":
        vals = {k: d for k, (_, d) in CONFIG_KEYS.items()}
        for src in (file_values or {}, flag_values or {}):
            for k, v in src.items():
                if v is not None:
                    vals[k] = _convert(k, v)
        return cls(vals)

    def __getitem__(self, key):
        return self.values[key]

    def transform(self) -> ProximityTransform:
        return ProximityTransform(self["transform"], c=self["transform.c"], ratio=self["transform.ratio"])

    def to_dict(self) -> dict:
        """Settings that determine the results (execution-only keys left out)."""
        return {k: v for k, v in sorted(self.values.items()) if k not in EXECUTION_ONLY}

    def check(self):
        choices = {
            "algorithm": ALGORITHMS,
            "objective": ENGINE_OBJECTIVES,
            "format": ("table", "matrix"),
            "linkage.scheme": tuple(SCHEMES),
            "output.height": ("r", "distance"),
            "bipartial.outer_scope": ("partition", "pair"),
        }
        for key, allowed in choices.items():
            if self[key] not in allowed:
                raise ConfigurationError(f"config key {key!r}: {self[key]!r} is not one of {allowed}")


# ---------------------------------------------------------------------------
# Argument parsing

_FLAG_KEYS = {
    "input": "input", "format": "format", "out": "output_dir", "algorithm": "algorithm",
    "objective": "objective", "metric": "metric", "transform": "transform",
    "transform_c": "transform.c", "transform_ratio": "transform.ratio",
    "scheme": "linkage.scheme", "n_clusters": "linkage.n_clusters",
    "facility_cost": "facility.cost", "facility_scale": "facility.scale",
    "p": "kmeans.p", "p_min": "kmeans.p_min", "p_max": "kmeans.p_max",
    "restarts": "kmeans.restarts", "seed": "kmeans.seed", "kmeans_metric": "kmeans.metric",
    "seeding": "kmeans.seeding", "first_stage_p": "hybrid.first_stage_p",
    "outer_weight": "bipartial.outer_weight", "outer_scope": "bipartial.outer_scope",
    "height": "output.height", "max_n": "oracle.max_n", "r": "oracle.r", "n_jobs": "n_jobs",
}


def _common(p: argparse.ArgumentParser, *groups):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--input", help="CSV file with the data")
    p.add_argument("--format", choices=("table", "matrix"), help="feature table or square distance matrix")
    p.add_argument("--out", help="output directory")
    p.add_argument("--metric", help="euclidean, squared_euclidean or manhattan")
    p.add_argument("--transform", help="average_preserving, max_complement or affine")
    p.add_argument("--transform-c", type=float)
    p.add_argument("--transform-ratio", type=float)
    p.add_argument("--n-jobs", type=int, help="threads for k-means restarts")
    if "objective" in groups:
        p.add_argument("--objective", help=", ".join(ENGINE_OBJECTIVES))
        p.add_argument("--facility-cost", choices=("centroid", "pairsum"))
        p.add_argument("--facility-scale", type=float)
    if "kmeans" in groups:
        p.add_argument("--p", type=int, help="number of k-means clusters")
        p.add_argument("--p-min", type=int)
        p.add_argument("--p-max", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--kmeans-metric", help="squared_euclidean or manhattan")
        p.add_argument("--seeding", choices=("farthest_point", "random"))
        p.add_argument("--first-stage-p", type=int)
        p.add_argument("--outer-weight", type=float)
        p.add_argument("--outer-scope", choices=("partition", "pair"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bipartial", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="run one clustering and write all artifacts")
    _common(c, "objective", "kmeans")
    c.add_argument("--algorithm", choices=ALGORITHMS)
    c.add_argument("--scheme", help="linkage scheme")
    c.add_argument("--n-clusters", type=int, help="cut level for classical linkage")
    c.add_argument("--height", choices=("r", "distance"), help="node height used in the Newick output")

    s = sub.add_parser("sweep", help="k-means objective for a range of cluster counts")
    _common(s, "kmeans")

    v = sub.add_parser("verify", help="check a merger history against the exhaustive oracle")
    _common(v, "objective")
    v.add_argument("--history", help="dendrogram JSON to check instead of running the engine")
    v.add_argument("--max-n", type=int, help=f"oracle size guard (at most {HARD_MAX_N})")
    v.add_argument("--random", type=int, metavar="COUNT", help="study COUNT random instances instead")
    v.add_argument("--random-n", type=int, default=8, help="size of random instances")
    v.add_argument("--random-kind", choices=("uniform", "two_blobs"), default="uniform")

    o = sub.add_parser("oracle", help="exact optimum over all partitions of a small instance")
    _common(o, "objective")
    o.add_argument("--r", type=float, help="weight r in [0, 1]")
    o.add_argument("--max-n", type=int, help=f"size guard (at most {HARD_MAX_N})")

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--kind", choices=("nested", "pairs", "gaussian", "uniform"), default="nested")
    g.add_argument("--n", type=int, default=60)
    g.add_argument("--blobs", type=int, default=4)
    g.add_argument("--levels", type=int, default=2)
    g.add_argument("--branching", type=int, default=2)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=True, help="CSV path to write")
    return parser


def config_from_args(args) -> RunConfig:
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {key: getattr(args, attr) for attr, key in _FLAG_KEYS.items() if hasattr(args, attr)}
    cfg = RunConfig.build(file_vals, flags)
    cfg.check()
    return cfg


# ---------------------------------------------------------------------------
# Input


def load_input(cfg: RunConfig):
    """Return ``(data or None, store, object_ids)``; the store has proximities."""
    path = cfg["input"]
    if not path:
        raise InputError("no input file given (config key 'input' / --input)")
    if not Path(path).is_file():
        raise InputError(f"input file {path!r} not found")
    if cfg["format"] == "matrix":
        store, ids = read_matrix_csv(path)
        return None, apply_transform(store, cfg.transform()), ids
    data = read_data_csv(path)
    return data, build_store(data, cfg["metric"], cfg.transform()), data.object_ids


def _require_table(data, what):
    if data is None:
        raise ConfigurationError(f"{what} needs a feature table (format = table)")


def _out_dir(cfg) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands


def _write_history_artifacts(out: Path, history, cfg, ids, extra_curve=None):
    io.write_merge_table(out / "merge_table.csv", history)
    io.write_history_json(out / "dendrogram.json", history, ids)
    newick, negative = io.to_newick(history, cfg["output.height"], ids)
    (out / "dendrogram.nwk").write_text(newick + "\n")
    if history.profile is not None or extra_curve:
        io.write_curve_csv(out / "objective_curve.csv", history, extra_curve)
    return negative


def cmd_cluster(cfg: RunConfig) -> int:
    data, store, ids = load_input(cfg)
    if store.n < 2 and cfg["algorithm"] != "kmeans":
        raise InputError("clustering needs at least two objects")
    out = _out_dir(cfg)
    report = {"config": cfg.to_dict(), "n_objects": store.n, "clamped_pairs": store.clamped}
    algo = cfg["algorithm"]
    history = None
    extra = None
    if algo == "linkage":
        history = run_linkage(store, cfg["linkage.scheme"])
        k = cfg["linkage.n_clusters"]
        if not 1 <= k <= store.n:
            raise ConfigurationError(f"config key 'linkage.n_clusters': {k} outside 1..{store.n}")
        partition = partition_at_step(history, store.n - k)
        report["decision"] = {"selected_step": store.n - k, "rule": "fixed_cluster_count"}
        report["height_inversions"] = height_inversions(history)
    elif algo == "bipartial" and cfg["objective"] == "bipartial_kmeans":
        _require_table(data, "the k-means merger")
        metric = cfg["kmeans.metric"]
        history = run_bipartial_kmeans(data, cfg.transform(), metric, cfg["bipartial.outer_weight"],
                                       outer_scope=cfg["bipartial.outer_scope"])
        offset = resolve_offset(data, metric, cfg.transform())
        partition, decision, curve = select_bipartial_kmeans(data, history, metric, offset,
                                                             cfg["bipartial.outer_weight"])
        extra = {"Q_D": curve[:, 1], "Q^S": curve[:, 2], "Q_D^S": curve[:, 3]}
        report["decision"] = decision.to_dict()
        report["envelope"] = envelope_report(history).to_dict()
    elif algo == "bipartial":
        obj = make_objective(cfg["objective"], store, data, None, cfg["facility.cost"], cfg["facility.scale"])
        history = run_bipartial(obj)
        if cfg["objective"] == "facility":
            t = facility_stop_step(history)
            partition = partition_at_step(history, t)
            report["decision"] = {"selected_step": t, "rule": "facility_no_improving_pair"}
        else:
            partition, decision = select_partition(history)
            report["decision"] = decision.to_dict()
        report["envelope"] = envelope_report(history).to_dict()
    elif algo == "hybrid":
        _require_table(data, "the hybrid procedure")
        res = hybrid_two_stage(
            data, cfg["hybrid.first_stage_p"], cfg["objective"], cfg["kmeans.metric"], cfg.transform(),
            cfg["bipartial.outer_weight"], cfg["kmeans.restarts"], cfg["kmeans.seed"],
            cfg["kmeans.seeding"], cfg["facility.cost"], cfg["facility.scale"], cfg["n_jobs"],
            cfg["bipartial.outer_scope"],
        )
        history, partition = res.history, res.partition
        report["first_stage_p"] = res.stage1.p
        report["decision"] = None if res.decision is None else res.decision.to_dict()
        if res.curve is not None:
            extra = {"Q_D": res.curve[:, 1], "Q^S": res.curve[:, 2], "Q_D^S": res.curve[:, 3]}
        if history.profile is not None:
            report["envelope"] = envelope_report(history).to_dict()
    else:  # kmeans
        _require_table(data, "k-means")
        partition = _cmd_kmeans(cfg, data, out, report)
    if history is not None:
        report["newick_negative_branches"] = _write_history_artifacts(out, history, cfg, ids, extra)
    report["selected_p"] = partition.p
    io.write_partition_csv(out / "partition.csv", partition, ids)
    io.dump_json(_jsonable(report), out / "stop_decision.json")
    print(f"{algo}: {partition.p} clusters; artifacts in {out}")
    return EXIT_OK


def _cmd_kmeans(cfg, data, out, report):
    metric = cfg["kmeans.metric"]
    tr = cfg.transform()
    offset = resolve_offset(data, metric, tr)
    if cfg["kmeans.p"] is None:
        sw = _sweep(cfg, data)
        io.write_sweep_csv(out / "sweep.csv", sw)
        model = sw.models[int(np.argmin(sw.qds))]
        report["decision"] = {"rule": "argmin_Q_D^S", "p_range": [int(sw.p[0]), int(sw.p[-1])]}
    else:
        model = kmeans_classic(data, cfg["kmeans.p"], cfg["kmeans.seeding"], cfg["kmeans.restarts"],
                               metric, seed=cfg["kmeans.seed"], n_jobs=cfg["n_jobs"])
        report["decision"] = {"rule": "fixed_p"}
    qd, qs, total = bipartial_kmeans_objective(data, model, offset=offset,
                                               outer_weight=cfg["bipartial.outer_weight"])
    report["objective"] = {"Q_D": qd, "Q^S": qs, "Q_D^S": total}
    report["centroids"] = model.centroids.tolist()
    return model.partition


def _sweep(cfg, data):
    lo, hi = cfg["kmeans.p_min"], min(cfg["kmeans.p_max"], data.n_objects)
    if not 1 <= lo <= hi:
        raise ConfigurationError(f"config keys 'kmeans.p_min'/'kmeans.p_max': empty range {lo}..{hi}")
    return kmeans_sweep(data, range(lo, hi + 1), cfg["kmeans.restarts"], cfg["kmeans.seed"],
                        cfg["kmeans.metric"], cfg.transform(), cfg["bipartial.outer_weight"],
                        cfg["kmeans.seeding"], cfg["n_jobs"])


def cmd_sweep(cfg: RunConfig) -> int:
    data, _, _ = load_input(cfg)
    _require_table(data, "sweep")
    sw = _sweep(cfg, data)
    out = _out_dir(cfg)
    io.write_sweep_csv(out / "sweep.csv", sw)
    print("p,Q_D^S,Q_D,Q^S,argmin")
    for p, qds, qd, qs, best in sw.rows():
        print(f"{p},{format_float(qds)},{format_float(qd)},{format_float(qs)},{'*' if best else ''}")
    return EXIT_OK


def _spec(cfg) -> ObjectiveSpec:
    if cfg["objective"] == "bipartial_kmeans":
        raise ConfigurationError("config key 'objective': the oracle does not cover bipartial_kmeans")
    return ObjectiveSpec(cfg["objective"], cfg["facility.cost"], cfg["facility.scale"])


def _max_n(cfg):
    m = cfg["oracle.max_n"]
    if m > HARD_MAX_N:
        raise ConfigurationError(f"config key 'oracle.max_n': {m} exceeds the hard cap {HARD_MAX_N}")
    return m


def cmd_verify(cfg: RunConfig, history_path=None, random_count=None, random_n=8,
               random_kind="uniform") -> int:
    spec = _spec(cfg)
    max_n = _max_n(cfg)
    if random_count is not None:
        if random_n > max_n:
            raise InputError(f"random instances of size {random_n} exceed the oracle guard {max_n}")

        def make(seed):
            if random_kind == "two_blobs":
                rng = np.random.default_rng(seed)
                half = random_n // 2
                X = np.vstack([rng.normal(0.0, 1.0, (half, 2)), rng.normal(10.0, 1.0, (random_n - half, 2))])
                data = DataTable(X)
            else:
                data = uniform_points(random_n, seed=seed)
            return build_store(data, cfg["metric"], cfg.transform()), data

        study = gap_study(spec, make, range(random_count), max_n)
        print("seed,oracle,engine,gap,relative_gap")
        for row in study["rows"]:
            print(",".join(format_float(row[k]) if k != "seed" else str(row[k])
                           for k in ("seed", "oracle", "engine", "gap", "relative_gap")))
        print(f"# instances={study['instances']} zero_gap={study['zero_gap']} "
              f"negative_gap={study['negative_gap']} median_relative_gap={format_float(study['median_relative_gap'])} "
              f"max_relative_gap={format_float(study['max_relative_gap'])}")
        if not study["all_ok"]:
            raise InvariantViolation("at least one random instance failed verification")
        return EXIT_OK
    data, store, _ = load_input(cfg)
    if store.n > max_n:
        raise InputError(f"n = {store.n} exceeds the oracle guard {max_n} (raise with --max-n, at most {HARD_MAX_N})")
    if history_path:
        history = io.read_history_json(history_path)
        if history.method and history.method != spec.name:
            raise ConfigurationError(
                f"config key 'objective': history was produced by {history.method!r}, not {spec.name!r}")
    else:
        obj = make_objective(spec.name, store, data, None, spec.facility_cost, spec.facility_scale)
        history = run_bipartial(obj)
    rep = verify_history(history, spec, store, data, max_n)
    sys.stdout.write(io.dump_json(_jsonable(rep.to_dict())))
    if not rep.ok:
        raise InvariantViolation(
            f"{len(rep.switch_point_mismatches)} switch-point mismatches, "
            f"{len(rep.profile_mismatches)} profile mismatches, "
            f"{len(rep.monotonicity_violations)} monotonicity violations")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    spec = _spec(cfg)
    data, store, ids = load_input(cfg)
    partition, value = oracle_best(spec, store, cfg["oracle.r"], data, max_n=_max_n(cfg))
    print(f"# optimum at r={format_float(cfg['oracle.r'])}: value={format_float(value)}, p={partition.p}")
    print("object_id,cluster_label")
    for oid, lab in zip(ids, partition.labels):
        print(f"{oid},{int(lab)}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "nested":
        data = make_nested_blobs(args.n, args.blobs, args.levels, args.seed, branching=args.branching)
    elif args.kind == "pairs":
        data = four_tight_pairs()
    elif args.kind == "gaussian":
        data = single_gaussian(args.n, args.dim, args.seed)
    else:
        data = uniform_points(args.n, args.dim, args.seed)
    write_data_csv(args.output, data)
    print(f"wrote {data.n_objects} objects to {args.output}")
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        cfg = config_from_args(args)
        if args.command == "cluster":
            return cmd_cluster(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.history, args.random, args.random_n, args.random_kind)
        return cmd_oracle(cfg)
    except (InvariantViolation, ObjectiveContractError) as exc:
        print(f"bipartial: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, ConfigurationError, BipartialError, OSError) as exc:
        print(f"bipartial: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        print(f"bipartial: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
