"""File formats: mechanism JSON, instance JSON, graph dumps, reports.

Mechanism files:
  {"agents": 2, "domains": [["1","2"],["1","2"]], "root": 0,
   "nodes": [{"id":0,"kind":"query","agent":0,"blocks":[["1"],["2"]],
              "children":[1,2]},
             {"id":1,"kind":"leaf","outcome":["0","0"],"payment":["0","0"]}]}

Values are rationals in text form ("3", "7/2").  Payments may be omitted
or null.  Format errors carry the line of the offending node where it
can be located in the source text.
"""

from __future__ import annotations

import csv
import io as _io
import json
from math import inf

from .model import ImplementationTree, LeafNode, QueryNode
from .rational import format_rational, parse_rational


class MechanismFormatError(ValueError):
    pass


def _line_of_node(text: str, ordinal: int) -> int | None:
    """Line of the ordinal-th (0-based) "id" key in the raw text."""
    pos = -1
    for _ in range(ordinal + 1):
        pos = text.find('"id"', pos + 1)
        if pos < 0:
            return None
    return text.count("\n", 0, pos) + 1


def parse_horizon(text: str) -> int | float:
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "oo"):
        return inf
    try:
        k = int(s)
    except ValueError:
        raise MechanismFormatError(f"bad horizon {text!r}: need an int or 'inf'")
    if k < 0:
        raise MechanismFormatError(f"bad horizon {text!r}: must be non-negative")
    return k


def loads_mechanism(text: str) -> ImplementationTree:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MechanismFormatError(
            f"invalid json at line {exc.lineno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise MechanismFormatError("mechanism file must hold a json object")
    for key in ("agents", "domains", "nodes", "root"):
        if key not in data:
            raise MechanismFormatError(f"missing key {key!r}")
    try:
        agents = int(data["agents"])
        domains = [
            [parse_rational(v) for v in dom] for dom in data["domains"]
        ]
        root = int(data["root"])
    except (TypeError, ValueError) as exc:
        raise MechanismFormatError(f"bad header: {exc}") from exc

    nodes: dict[int, QueryNode | LeafNode] = {}
    for ordinal, entry in enumerate(data["nodes"]):
        where = _line_of_node(text, ordinal)
        loc = f" (line {where})" if where else ""
        try:
            nid = int(entry["id"])
            kind = entry["kind"]
            if kind == "leaf":
                outcome = tuple(parse_rational(v) for v in entry["outcome"])
                payment = entry.get("payment")
                pay = (
                    None
                    if payment is None
                    else tuple(parse_rational(v) for v in payment)
                )
                nodes[nid] = LeafNode(id=nid, outcome=outcome, payment=pay)
            elif kind == "query":
                blocks = tuple(
                    tuple(sorted(parse_rational(v) for v in blk))
                    for blk in entry["blocks"]
                )
                children = tuple(int(c) for c in entry["children"])
                nodes[nid] = QueryNode(
                    id=nid,
                    agent=int(entry["agent"]),
                    blocks=blocks,
                    children=children,
                )
            else:
                raise MechanismFormatError(
                    f"node {entry.get('id')}{loc}: unknown kind {kind!r}"
                )
        except MechanismFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MechanismFormatError(
                f"node {entry.get('id')}{loc}: {exc}"
            ) from exc

    try:
        return ImplementationTree(agents, domains, root, nodes)
    except ValueError as exc:
        raise MechanismFormatError(str(exc)) from exc


def load_mechanism(path: str) -> ImplementationTree:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_mechanism(fh.read())


def mechanism_to_data(tree: ImplementationTree) -> dict:
    nodes = []
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if isinstance(node, LeafNode):
            nodes.append(
                {
                    "id": node.id,
                    "kind": "leaf",
                    "outcome": [format_rational(v) for v in node.outcome],
                    "payment": (
                        None
                        if node.payment is None
                        else [format_rational(v) for v in node.payment]
                    ),
                }
            )
        else:
            nodes.append(
                {
                    "id": node.id,
                    "kind": "query",
                    "agent": node.agent,
                    "blocks": [
                        [format_rational(v) for v in blk] for blk in node.blocks
                    ],
                    "children": list(node.children),
                }
            )
    return {
        "agents": tree.agents,
        "domains": [[format_rational(v) for v in dom] for dom in tree.domains],
        "root": tree.root,
        "nodes": nodes,
    }


def dumps_mechanism(tree: ImplementationTree) -> str:
    return json.dumps(mechanism_to_data(tree), sort_keys=True, indent=2) + "\n"


def dump_mechanism(tree: ImplementationTree, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_mechanism(tree))


def loads_instance(text: str):
    """Parse an instance file into (PSystem, valuation domain)."""
    from .greedy import PSystem

    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MechanismFormatError(
            f"invalid json at line {exc.lineno}: {exc.msg}"
        ) from exc
    for key in ("kind", "n", "domain"):
        if key not in data:
            raise MechanismFormatError(f"missing key {key!r}")
    kind = data["kind"]
    n = int(data["n"])
    domain = tuple(sorted(parse_rational(v) for v in data["domain"]))
    params = data.get("params", {}) or {}
    if kind == "single_item":
        ps = PSystem.single_item(n)
    elif kind == "uniform":
        ps = PSystem.uniform(n, int(params["rank"]))
    elif kind == "graphic":
        edges = [tuple(e) for e in params["edges"]]
        if len(edges) != n:
            raise MechanismFormatError(
                f"{len(edges)} edges for {n} elements"
            )
        ps = PSystem.graphic(edges)
    elif kind == "explicit":
        ps = PSystem.explicit(n, [frozenset(s) for s in params["maximal_sets"]])
    else:
        raise MechanismFormatError(f"unknown instance kind {kind!r}")
    return ps, domain


def load_instance(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_instance(fh.read())


def instance_to_data(kind: str, n: int, domain, params: dict | None = None) -> dict:
    return {
        "kind": kind,
        "n": n,
        "domain": [format_rational(v) for v in domain],
        "params": params or {},
    }


def instance_data_for(ps, domain) -> dict:
    """Serializable form of a built p-system, recovered from how it was
    constructed; anything unrecognized falls back to the explicit
    maximal-set listing."""
    name = getattr(ps, "name", "")
    if name == "single_item":
        return instance_to_data("single_item", ps.ground_size, domain)
    if name.startswith("uniform_"):
        rank = int(name.split("_", 1)[1])
        return instance_to_data(
            "uniform", ps.ground_size, domain, {"rank": rank}
        )
    if name == "graphic" and hasattr(ps, "edges"):
        return instance_to_data(
            "graphic",
            ps.ground_size,
            domain,
            {"edges": [list(e) for e in ps.edges]},
        )
    tops = [sorted(s) for s in ps.maximal_sets()]
    return instance_to_data(
        "explicit", ps.ground_size, domain, {"maximal_sets": sorted(tops)}
    )


def graph_to_data(graph) -> dict:
    """Serializable form of a class graph (see ospkit.cmon)."""
    vertices = []
    for cls in graph.vertices:
        vertices.append(
            {
                "agent": cls.agent,
                "anchor": cls.anchor,
                "slice": cls.slice_kind,
                "bit": int(cls.bit),
                "types": [format_rational(v) for v in cls.types],
                "size": len(cls.members),
            }
        )
    edges = [
        {"from": a, "to": b, "weight": format_rational(w)}
        for a, b, w in graph.edges
    ]
    return {"vertices": vertices, "edges": edges}


def render_report(data: dict) -> str:
    """Canonical report text: sorted keys, two-space indent, newline end."""
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_report(data: dict, path: str | None) -> str:
    text = render_report(data)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def render_csv(rows: list[dict], columns: list[str]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buf.getvalue()
