"""Readers and writers for aggregation datasets, TREC runs and model files.

Aggregation text format, one line per (query, document)::

    <grade> qid:<qid> 1:<v1> 2:<v2> ... m:<vm> #docid=<name>

Each ``v`` is the document's position in that input, or ``NULL`` when the
input does not rank it. Grade ``-1`` marks unlabeled data.
"""

from __future__ import annotations

import json
import os
import re
from collections import OrderedDict
from typing import Iterable, Sequence

from .model import AggregateRun, AggregationModel, InstanceError, QueryInstance, reindex

_DOCID = re.compile(r"docid\s*=\s*(\S+)")
MODEL_KEYS = ("weights", "sigma", "mapping_kind", "factor_rank", "objective_kind", "rbp_p", "y_max")


class FormatError(ValueError):
    """A malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, path: str | os.PathLike | None = None, lineno: int | None = None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


def _qid_key(qid: str):
    return (0, int(qid), qid) if qid.isdigit() else (1, 0, qid)


def _parse_line(line: str, path, lineno: int):
    body, _, comment = line.partition("#")
    tokens = body.split()
    if len(tokens) < 3:
        raise FormatError("expected '<grade> qid:<qid> 1:<v> ...'", path, lineno)
    try:
        grade = int(tokens[0])
    except ValueError:
        raise FormatError(f"non-integer grade {tokens[0]!r}", path, lineno) from None
    if grade < -1:
        raise FormatError(f"grade {grade} below -1", path, lineno)
    if not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise FormatError(f"expected qid:<qid>, got {tokens[1]!r}", path, lineno)
    qid = tokens[1][4:]
    values: list[int | None] = []
    for col, token in enumerate(tokens[2:], start=1):
        key, sep, value = token.partition(":")
        if not sep or key != str(col):
            raise FormatError(f"expected column {col}:<value>, got {token!r}", path, lineno)
        if value == "NULL":
            values.append(None)
            continue
        try:
            pos = int(value)
        except ValueError:
            raise FormatError(f"non-integer position {value!r} in column {col}", path, lineno) from None
        if pos < 1:
            raise FormatError(f"position {pos} in column {col} is below 1", path, lineno)
        values.append(pos)
    match = _DOCID.search(comment)
    if match is None:
        raise FormatError("missing '#docid=<name>'", path, lineno)
    return grade, qid, values, match.group(1)


def parse_agg_lines(lines: Iterable[str], path=None) -> list[QueryInstance]:
    """Parse aggregation-format lines; see :func:`parse_agg_file`."""
    # qid -> {"docs": [...], "grades": [...], "values": [...], "lines": [...]}
    groups: "OrderedDict[str, dict]" = OrderedDict()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        grade, qid, values, doc = _parse_line(line, path, lineno)
        g = groups.setdefault(qid, {"docs": [], "grades": [], "values": [], "lines": [], "seen": {}})
        if doc in g["seen"]:
            raise FormatError(
                f"duplicate (qid, docid) ({qid}, {doc}); first seen on line {g['seen'][doc]}",
                path, lineno,
            )
        if g["values"] and len(values) != len(g["values"][0]):
            raise FormatError(
                f"inconsistent input count for qid {qid}: {len(values)} columns, "
                f"line {g['lines'][0]} has {len(g['values'][0])}",
                path, lineno,
            )
        g["seen"][doc] = lineno
        g["docs"].append(doc)
        g["grades"].append(grade)
        g["values"].append(values)
        g["lines"].append(lineno)

    instances = []
    for qid in sorted(groups, key=_qid_key):
        g = groups[qid]
        m = len(g["values"][0])
        inputs = []
        for col in range(m):
            raw = {}
            owners: dict[int, int] = {}
            for doc, vals, lineno in zip(g["docs"], g["values"], g["lines"]):
                pos = vals[col]
                if pos is None:
                    continue
                if pos in owners:
                    raise FormatError(
                        f"duplicate position {pos} in input {col + 1} of qid {qid} "
                        f"(also on line {owners[pos]})",
                        path, lineno,
                    )
                owners[pos] = lineno
                raw[doc] = pos
            inputs.append(raw)
        grades = g["grades"]
        labeled = [y >= 0 for y in grades]
        if any(labeled) and not all(labeled):
            bad = next(ln for ln, lab in zip(g["lines"], labeled) if lab != labeled[0])
            raise FormatError(f"qid {qid} mixes labeled and unlabeled (-1) documents", path, bad)
        try:
            instances.append(reindex(qid, g["docs"], inputs, grades if all(labeled) else None))
        except InstanceError as exc:
            raise FormatError(str(exc), path, g["lines"][0]) from None
    return instances


def parse_agg_file(path: str | os.PathLike) -> list[QueryInstance]:
    """Read a dataset in the aggregation text format.

    Returns one :class:`QueryInstance` per distinct qid, ordered by qid
    (numerically when all digits). Blocks of the same qid need not be
    contiguous. Documents keep their order of appearance.

    Raises
    ------
    FormatError
        On a malformed line, a non-integer grade, an inconsistent number of
        input columns within a qid, a duplicate (qid, docid) pair or a
        duplicate position inside one input.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_agg_lines(fh, path)


def format_agg_lines(instances: Sequence[QueryInstance]) -> list[str]:
    lines = []
    for q in instances:
        for j in range(q.n):
            grade = -1 if q.labels is None else q.labels[j]
            cols = []
            for c, tau in enumerate(q.inputs, start=1):
                pos = tau.positions.get(j)
                cols.append(f"{c}:{'NULL' if pos is None else pos}")
            lines.append(f"{grade} qid:{q.query_id} {' '.join(cols)} #docid={q.doc_names[j]}")
    return lines


def write_agg_file(instances: Sequence[QueryInstance], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in format_agg_lines(instances):
            fh.write(line + "\n")


def format_run_lines(run: AggregateRun, run_tag: str) -> list[str]:
    lines = []
    for qid, entries in run.rankings.items():
        names = run.doc_names.get(qid)
        for rank, (item, score) in enumerate(entries, start=1):
            name = names[item] if names else str(item)
            lines.append(f"{qid} Q0 {name} {rank} {score:.6f} {run_tag}")
    return lines


def write_run(run: AggregateRun, path: str | os.PathLike, run_tag: str = "rankagg") -> None:
    """Write ``run`` in TREC format: ``<qid> Q0 <docname> <rank> <score> <tag>``.

    Rank order is fixed by the run itself before scores are rounded to six
    decimals, so rounding never reorders documents.
    """
    if not run_tag or any(ch.isspace() for ch in run_tag):
        raise ValueError("run tag must be a non-empty token without whitespace")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in format_run_lines(run, run_tag):
            fh.write(line + "\n")


def read_run(path: str | os.PathLike, instances: Sequence[QueryInstance]) -> AggregateRun:
    """Read a TREC run, mapping document names back to item ids of ``instances``."""
    by_qid = {q.query_id: q for q in instances}
    rows: "OrderedDict[str, list[tuple[int, int, float, int]]]" = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError("expected 6 fields '<qid> Q0 <doc> <rank> <score> <tag>'", path, lineno)
            qid, _, doc, rank, score, _ = parts
            if qid not in by_qid:
                raise FormatError(f"run references unknown query {qid!r}", path, lineno)
            q = by_qid[qid]
            try:
                item = q.doc_names.index(doc)
            except ValueError:
                raise FormatError(f"run references unknown document {doc!r} for query {qid}", path, lineno) from None
            try:
                rank_i, score_f = int(rank), float(score)
            except ValueError:
                raise FormatError("rank must be an integer and score a real number", path, lineno) from None
            rows.setdefault(qid, []).append((rank_i, item, score_f, lineno))
    run = AggregateRun()
    for qid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        seen: set[int] = set()
        for _, item, _, lineno in entries:
            if item in seen:
                raise FormatError(f"document listed twice for query {qid}", path, lineno)
            seen.add(item)
        run.rankings[qid] = [(item, score) for _, item, score, _ in entries]
        run.doc_names[qid] = by_qid[qid].doc_names
    return run


def model_to_dict(model: AggregationModel) -> dict:
    return {
        "weights": list(model.weights),
        "sigma": model.sigma,
        "mapping_kind": model.mapping_kind,
        "factor_rank": model.factor_rank,
        "objective_kind": model.objective_kind,
        "rbp_p": model.rbp_p,
        "y_max": model.y_max,
        "n_inputs": model.n_inputs,
        "seed": model.seed,
        "drop_singular_values": model.drop_singular_values,
        "minmax": model.minmax,
    }


def save_model(model: AggregationModel, path: str | os.PathLike) -> None:
    # json writes floats with repr(), which round-trips doubles exactly
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> AggregationModel:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"cannot parse model file: {exc.msg}", path, exc.lineno) from None
    if not isinstance(data, dict):
        raise FormatError("model file must hold a JSON object", path)
    missing = [k for k in MODEL_KEYS if k not in data]
    if missing:
        raise FormatError(f"model file lacks field(s) {', '.join(missing)}", path)
    weights = data["weights"]
    n_inputs = data.get("n_inputs")
    if n_inputs is None:
        # without an explicit input count, infer it from the weight dimension
        p = int(data["factor_rank"])
        kind = data["mapping_kind"]
        n_inputs = len(weights) if kind == "BF" else len(weights) // (3 * p) if kind == "MF" else 0
    try:
        return AggregationModel(
            weights=tuple(weights),
            sigma=float(data["sigma"]),
            mapping_kind=data["mapping_kind"],
            factor_rank=int(data["factor_rank"]),
            objective_kind=data["objective_kind"],
            rbp_p=float(data["rbp_p"]),
            y_max=int(data["y_max"]),
            n_inputs=int(n_inputs),
            seed=int(data.get("seed", 0)),
            drop_singular_values=bool(data.get("drop_singular_values", False)),
            minmax=bool(data.get("minmax", False)),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), path) from None
