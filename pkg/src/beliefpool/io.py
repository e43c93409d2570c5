"""Network files (JSON), dataset CSVs, and a small BIF importer.

Network file, format version 1::

    {
      "format_version": 1,
      "variables": [{"name": "asia", "states": ["yes", "no"]}, ...],
      "edges": [["asia", "tub"], ...],
      "cpts": [{"node": "tub", "parents": ["asia"],
                "table": [[0.05, 0.95], [0.01, 0.99]]}, ...]
    }

``table`` has one row per parent configuration, last listed parent varying
fastest. Files may list parents in any order; they are normalised to
ascending variable index on load. Floats are written with ``repr`` so
values survive a round trip exactly.

Dataset CSV, format version 1::

    # format_version: 1
    # states: asia=yes|no;tub=yes|no;...
    asia,tub,...
    no,no,...
"""

from __future__ import annotations

import csv
import io as _io
import json
import re
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import BayesNet, Cpt, Dag, DataSet, Variable, validate_network
from .errors import ParseError

FORMAT_VERSION = 1


def net_to_dict(net: BayesNet, **meta) -> dict:
    names = net.names
    doc = {"format_version": FORMAT_VERSION}
    doc.update(meta)
    doc["variables"] = [{"name": v.name, "states": list(v.states)} for v in net.variables]
    doc["edges"] = [[names[u], names[v]] for u, v in net.dag.sorted_edges()]
    doc["cpts"] = [
        {
            "node": names[i],
            "parents": [names[p] for p in cpt.parents],
            "table": cpt.table.tolist(),
        }
        for i, cpt in enumerate(net.cpts)
    ]
    return doc


def _field(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"missing field {key!r}", where)
    return doc[key]


def net_from_dict(doc: dict, validate: bool = True) -> BayesNet:
    version = _field(doc, "format_version", "document")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version!r}", "format_version")
    variables = []
    for k, v in enumerate(_field(doc, "variables", "document")):
        where = f"variables[{k}]"
        try:
            variables.append(Variable(str(_field(v, "name", where)), tuple(_field(v, "states", where))))
        except ValueError as exc:
            raise ParseError(str(exc), where) from None
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ParseError("duplicate variable name", "variables")
    index = {name: i for i, name in enumerate(names)}

    def lookup(name, where):
        if name not in index:
            raise ParseError(f"unknown variable {name!r}", where)
        return index[name]

    edges = set()
    for k, e in enumerate(_field(doc, "edges", "document")):
        where = f"edges[{k}]"
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise ParseError("edge must be a [parent, child] pair", where)
        edges.add((lookup(e[0], where), lookup(e[1], where)))
    try:
        dag = Dag(len(variables), frozenset(edges))
    except ValueError as exc:
        raise ParseError(str(exc), "edges") from None

    cpts: list[Optional[Cpt]] = [None] * len(variables)
    for k, c in enumerate(_field(doc, "cpts", "document")):
        node = _field(c, "node", f"cpts[{k}]")
        where = f"cpts[{k}] (node {node!r})"
        i = lookup(node, where)
        if cpts[i] is not None:
            raise ParseError("duplicate cpt", where)
        parents = [lookup(p, where) for p in _field(c, "parents", where)]
        rows = _field(c, "table", where)
        card = variables[i].card
        pcards = [variables[p].card for p in parents]
        expected_rows = int(np.prod(pcards, dtype=np.int64))
        if not isinstance(rows, list) or len(rows) != expected_rows:
            raise ParseError(
                f"expected {expected_rows} rows, got {len(rows) if isinstance(rows, list) else rows!r}",
                where,
            )
        for r, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != card:
                raise ParseError(f"row {r} must have {card} entries", where)
        try:
            table = np.array(rows, dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError("non-numeric table entry", where) from None
        order = sorted(range(len(parents)), key=lambda a: parents[a])
        if order != list(range(len(parents))):
            table = (
                table.reshape(pcards + [card])
                .transpose(order + [len(parents)])
                .reshape(expected_rows, card)
            )
        cpts[i] = Cpt(i, tuple(sorted(parents)), table)
    missing = [names[i] for i, c in enumerate(cpts) if c is None]
    if missing:
        raise ParseError(f"no cpt for {missing}", "cpts")
    net = BayesNet(tuple(variables), dag, tuple(cpts))
    if validate:
        validate_network(net)
    return net


def write_network(net: BayesNet, path, **meta) -> None:
    Path(path).write_text(json.dumps(net_to_dict(net, **meta), indent=1) + "\n")


def read_network(path, validate: bool = True) -> BayesNet:
    text = Path(path).read_text()
    if Path(path).suffix.lower() == ".bif":
        return read_bif_text(text, validate)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return net_from_dict(doc, validate)


def asset_path(name: str) -> Path:
    """Path of a bundled asset such as ``asia.json``."""
    return Path(str(resources.files("beliefpool") / "assets" / name))


def load_network(spec: str) -> BayesNet:
    """Read a network from a path, or from a bundled asset as ``asset:asia``."""
    if spec.startswith("asset:"):
        name = spec[len("asset:"):]
        return read_network(asset_path(name if name.endswith(".json") else name + ".json"))
    return read_network(spec)


# ---------------------------------------------------------------------------
# datasets


def dataset_to_csv(ds: DataSet) -> str:
    buf = _io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n")
    buf.write("# states: " + ";".join(f"{v.name}={'|'.join(v.states)}" for v in ds.variables) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ds.names)
    labels = [np.array(v.states, dtype=object) for v in ds.variables]
    for row in ds.rows:
        w.writerow([labels[j][s] for j, s in enumerate(row)])
    return buf.getvalue()


def write_dataset(ds: DataSet, path) -> None:
    Path(path).write_text(dataset_to_csv(ds))


def _parse_states(text: str, lineno: int) -> dict[str, tuple[str, ...]]:
    out = {}
    for part in filter(None, text.split(";")):
        if "=" not in part:
            raise ParseError(f"bad states entry {part!r}", f"line {lineno}")
        name, states = part.split("=", 1)
        out[name.strip()] = tuple(s.strip() for s in states.split("|"))
    return out


def dataset_from_csv(text: str, variables: Optional[Sequence[Variable]] = None) -> DataSet:
    """Parse a dataset; state lists come from ``variables`` or the ``# states`` line."""
    lines = text.splitlines()
    states: dict[str, tuple[str, ...]] = {}
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        body = lines[k][1:].strip()
        if body.startswith("format_version:"):
            version = body.split(":", 1)[1].strip()
            if version != str(FORMAT_VERSION):
                raise ParseError(f"unsupported format_version {version!r}", f"line {k + 1}")
        elif body.startswith("states:"):
            states = _parse_states(body.split(":", 1)[1], k + 1)
        k += 1
    reader = csv.reader(lines[k:])
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header row", f"line {k + 1}") from None
    if variables is None:
        missing = [h for h in header if h not in states]
        if missing:
            raise ParseError(f"no state list for {missing}", "states")
        variables = [Variable(h, states[h]) for h in header]
    else:
        by_name = {v.name: v for v in variables}
        missing = [h for h in header if h not in by_name]
        if missing:
            raise ParseError(f"unknown columns {missing}", f"line {k + 1}")
        variables = [by_name[h] for h in header]
    lookup = [{s: i for i, s in enumerate(v.states)} for v in variables]
    rows = []
    for r, rec in enumerate(reader, start=k + 2):
        if not rec:
            continue
        if len(rec) != len(variables):
            raise ParseError(f"expected {len(variables)} fields, got {len(rec)}", f"line {r}")
        try:
            rows.append([lookup[j][cell] for j, cell in enumerate(rec)])
        except KeyError as exc:
            raise ParseError(f"unknown state {exc.args[0]!r}", f"line {r}") from None
    return DataSet(tuple(variables), np.array(rows, dtype=np.int64).reshape(-1, len(variables)))


def read_dataset(path, variables: Optional[Sequence[Variable]] = None) -> DataSet:
    return dataset_from_csv(Path(path).read_text(), variables)


# ---------------------------------------------------------------------------
# BIF import (the subset used by the public network repositories)

_VAR_RE = re.compile(
    r"variable\s+([^\s{]+)\s*\{[^}]*?type\s+discrete\s*\[\s*\d+\s*\]\s*\{([^}]*)\}", re.S
)
_PROB_RE = re.compile(r"probability\s*\(\s*([^)|]+?)\s*(?:\|\s*([^)]*))?\)\s*\{(.*?)\}", re.S)
_NUM_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


def _bif_line(text: str, pos: int) -> str:
    return f"line {text.count(chr(10), 0, pos) + 1}"


def read_bif_text(text: str, validate: bool = True) -> BayesNet:
    variables = []
    for m in _VAR_RE.finditer(text):
        states = tuple(s.strip() for s in m.group(2).split(",") if s.strip())
        try:
            variables.append(Variable(m.group(1), states))
        except ValueError as exc:
            raise ParseError(str(exc), _bif_line(text, m.start())) from None
    if not variables:
        raise ParseError("no discrete variables found", "line 1")
    index = {v.name: i for i, v in enumerate(variables)}
    edges, cpts = set(), {}
    for m in _PROB_RE.finditer(text):
        where = _bif_line(text, m.start())
        child = m.group(1).strip()
        if child not in index:
            raise ParseError(f"unknown variable {child!r}", where)
        parents = [p.strip() for p in (m.group(2) or "").split(",") if p.strip()]
        for p in parents:
            if p not in index:
                raise ParseError(f"unknown parent {p!r}", where)
            edges.add((p, child))
        body = m.group(3)
        card = variables[index[child]].card
        pcards = [variables[index[p]].card for p in parents]
        table = np.zeros((int(np.prod(pcards, dtype=np.int64)), card))
        if "table" in body and not parents:
            nums = _NUM_RE.findall(body.split("table", 1)[1])
            table[0] = [float(x) for x in nums[:card]]
        else:
            for entry in re.finditer(r"\(([^)]*)\)\s*([^;]*);", body):
                labels = [s.strip() for s in entry.group(1).split(",")]
                try:
                    idx = [variables[index[p]].states.index(s) for p, s in zip(parents, labels)]
                except ValueError:
                    raise ParseError(f"unknown parent state in {labels}", where) from None
                row = int(np.ravel_multi_index(idx, pcards)) if parents else 0
                table[row] = [float(x) for x in _NUM_RE.findall(entry.group(2))[:card]]
        cpts[child] = {"node": child, "parents": parents, "table": table.tolist()}
    doc = {
        "format_version": FORMAT_VERSION,
        "variables": [{"name": v.name, "states": list(v.states)} for v in variables],
        "edges": [list(e) for e in sorted(edges)],
        "cpts": [cpts[v.name] for v in variables if v.name in cpts],
    }
    return net_from_dict(doc, validate)
