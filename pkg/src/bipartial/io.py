"""Serialization of histories, partitions and curves.

Every float is written with 17 significant digits so that files read back
bit-exactly. JSON uses ``null`` for missing (NaN) values.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .core import MergeHistory, MergeRecord, ObjectiveProfile, Partition, format_float
from .exceptions import InputError

MERGE_COLUMNS = ("t", "left", "right", "size", "link_value", "r_t", "delta_qs", "delta_qd",
                 "qs_t", "qd_t", "q_half_t")
SWEEP_COLUMNS = ("p", "Q_D^S", "Q_D", "Q^S", "argmin")
HISTORY_FORMAT = "bipartial-dendrogram"


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _num(x):
    """JSON-safe number: NaN becomes None, numpy scalars become Python ones."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return None if math.isnan(x) else x


def _unnum(x):
    return math.nan if x is None else float(x)


def dump_json(obj, path=None) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# Merge table


def merge_table_rows(history: MergeHistory):
    prof = history.profile
    for k, rec in enumerate(history.records):
        if prof is not None:
            qs, qd, qh = prof.qs[k + 1], prof.qd[k + 1], prof.q_half[k + 1]
        else:
            qs = qd = qh = math.nan
        yield (rec.step, rec.left, rec.right, rec.size, rec.link_value, rec.r,
               rec.delta_qs, rec.delta_qd, qs, qd, qh)


def write_merge_table(path, history: MergeHistory) -> None:
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(MERGE_COLUMNS)
        for row in merge_table_rows(history):
            w.writerow([format_float(v) for v in row])


# ---------------------------------------------------------------------------
# Dendrogram JSON


def _leaf_names(history: MergeHistory, object_ids=None):
    if object_ids is not None and history.leaves == history.n_objects and np.array_equal(
        history.initial_labels, np.arange(history.leaves)
    ):
        return [str(o) for o in object_ids]
    return [f"atom{i}" for i in range(history.leaves)]


def node_heights(history: MergeHistory, height: str = "r") -> np.ndarray:
    """Height of every internal node.

    ``height="r"`` uses the thresholds (``1 - r`` for histories whose
    thresholds decrease, so that heights grow toward the root);
    ``"distance"`` uses the link values.
    """
    if height == "r":
        r = history.r
        return 1.0 - r if history.r_direction == "decreasing" else r
    if height in ("distance", "link"):
        return history.link_values
    raise InputError(f"height must be 'r' or 'distance', got {height!r}")


def _tree(history: MergeHistory, names):
    L = history.leaves
    nodes = {i: {"id": i, "name": names[i], "size": 1} for i in range(L)}
    for rec in history.records:
        nodes[rec.new_cluster] = {
            "id": rec.new_cluster,
            "size": rec.size,
            "r": _num(rec.r),
            "link_value": _num(rec.link_value),
            "children": [nodes.pop(rec.left), nodes.pop(rec.right)],
        }
    return nodes[L + len(history.records) - 1] if history.records else nodes[0]


def history_to_dict(history: MergeHistory, object_ids=None) -> dict:
    prof = history.profile
    return {
        "format": HISTORY_FORMAT,
        "version": 1,
        "method": history.method,
        "leaves": history.leaves,
        "r_direction": history.r_direction,
        "initial_labels": [int(v) for v in history.initial_labels],
        "object_ids": None if object_ids is None else [str(o) for o in object_ids],
        "profile": None if prof is None else {
            "orientation": prof.orientation,
            "qs": [_num(v) for v in prof.qs],
            "qd": [_num(v) for v in prof.qd],
        },
        "merges": [
            {
                "t": rec.step, "left": rec.left, "right": rec.right, "new_cluster": rec.new_cluster,
                "size": rec.size, "link_value": _num(rec.link_value), "r_t": _num(rec.r),
                "delta_qs": _num(rec.delta_qs), "delta_qd": _num(rec.delta_qd),
            }
            for rec in history.records
        ],
        "tree": _tree(history, _leaf_names(history, object_ids)),
    }


def history_from_dict(doc: dict) -> MergeHistory:
    """Rebuild a history from :func:`history_to_dict` output (``tree`` is ignored)."""
    if doc.get("format") != HISTORY_FORMAT:
        raise InputError(f"not a dendrogram document (format={doc.get('format')!r})")
    try:
        records = tuple(
            MergeRecord(int(m["t"]), int(m["left"]), int(m["right"]), int(m["new_cluster"]),
                        int(m["size"]), _unnum(m["link_value"]), _unnum(m["r_t"]),
                        _unnum(m["delta_qs"]), _unnum(m["delta_qd"]))
            for m in doc["merges"]
        )
        prof = doc["profile"]
        profile = None if prof is None else ObjectiveProfile(
            np.array([_unnum(v) for v in prof["qs"]]), np.array([_unnum(v) for v in prof["qd"]]),
            prof["orientation"],
        )
        return MergeHistory(records, int(doc["leaves"]), profile,
                            np.array(doc["initial_labels"], dtype=np.intp),
                            doc["r_direction"], doc["method"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed dendrogram document: {exc}") from exc


def write_history_json(path, history: MergeHistory, object_ids=None) -> None:
    dump_json(history_to_dict(history, object_ids), path)


def read_history_json(path) -> MergeHistory:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return history_from_dict(doc)


# ---------------------------------------------------------------------------
# Newick

_PLAIN = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _newick_name(name: str) -> str:
    return name if _PLAIN.match(name) else "'" + name.replace("'", "''") + "'"


def to_newick(history: MergeHistory, height: str = "r", object_ids=None) -> tuple[str, int]:
    """Newick string with cumulative heights, and the number of negative branches.

    Leaves sit at height 0; the branch above a node is the parent's height
    minus its own. Non-monotone heights therefore show up as negative
    branch lengths, which are kept and counted.
    """
    names = [_newick_name(s) for s in _leaf_names(history, object_ids)]
    L = history.leaves
    if not history.records:
        return names[0] + ";", 0
    h = node_heights(history, height)
    text = {i: names[i] for i in range(L)}
    node_h = {i: 0.0 for i in range(L)}
    negative = 0
    for k, rec in enumerate(history.records):
        parts = []
        for child in (rec.left, rec.right):
            blen = float(h[k]) - node_h[child]
            negative += blen < 0
            parts.append(f"{text.pop(child)}:{format_float(blen)}")
        text[rec.new_cluster] = "(" + ",".join(parts) + ")"
        node_h[rec.new_cluster] = float(h[k])
    return text[L + len(history.records) - 1] + ";", int(negative)


# ---------------------------------------------------------------------------
# Partitions, curves, sweeps


def write_partition_csv(path, partition: Partition, object_ids=None) -> None:
    ids = range(partition.n) if object_ids is None else object_ids
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(("object_id", "cluster_label"))
        for oid, lab in zip(ids, partition.labels):
            w.writerow((oid, int(lab)))


def read_partition_csv(path) -> tuple[list, Partition]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["object_id", "cluster_label"]:
        raise InputError(f"{path}: expected header object_id,cluster_label")
    try:
        return [r[0] for r in rows[1:]], Partition(np.array([int(r[1]) for r in rows[1:]]))
    except (IndexError, ValueError) as exc:
        raise InputError(f"{path}: bad cluster_label ({exc})") from exc


def write_curve_csv(path, history: MergeHistory, extra: dict | None = None) -> None:
    """One row per level: ``t, p, qs, qd, q_half`` plus any ``extra`` columns."""
    prof = history.profile
    levels = len(history.records) + 1
    cols = {
        "t": np.arange(levels),
        "p": history.leaves - np.arange(levels),
        "qs": prof.qs if prof is not None else np.full(levels, math.nan),
        "qd": prof.qd if prof is not None else np.full(levels, math.nan),
        "q_half": prof.q_half if prof is not None else np.full(levels, math.nan),
    }
    for key, values in (extra or {}).items():
        cols[key] = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(cols)
        for k in range(levels):
            w.writerow([format_float(cols[c][k].item()) for c in cols])


def write_sweep_csv(path, sweep) -> None:
    with open(path, "w", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for p, qds, qd, qs, best in sweep.rows():
            w.writerow((p, format_float(qds), format_float(qd), format_float(qs), "*" if best else ""))
