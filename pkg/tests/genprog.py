"""Seeded random program generators shared by the property and acceptance tests.

Programs are emitted as canonical `.mir` text and re-parsed, so every generated
case also exercises the parser.  The synthetic API catalog here is independent
of the shipped one.
"""

from __future__ import annotations

import random

from droidtriage.catalog import ApiCatalog

SYNTH_CATALOG_TEXT = """
source:ext.api.Src.read()->string
api:ext.api.Util.now()->string
api:ext.api.Util.log(string)->void
sink:network:ext.api.Net.send(string)->void
sink:storage:ext.api.Disk.save(string,string)->void
"""

# (qualified name, param count, has result)
EXTERNAL_POOL = [
    ("ext.api.Src.read", 0, True),
    ("ext.api.Util.now", 0, True),
    ("ext.api.Util.log", 1, False),
    ("ext.api.Net.send", 1, False),
    ("ext.api.Disk.save", 2, False),
    ("ext.other.Thirdparty.track", 1, False),  # outside the catalog
]


def synth_catalog() -> ApiCatalog:
    return ApiCatalog.parse(SYNTH_CATALOG_TEXT)


def _ext_sig(name: str, nparams: int, has_result: bool) -> str:
    params = ",".join(["string"] * nparams)
    ret = "string" if has_result else "void"
    return f"{name}({params})->{ret}"


def _method_sig(idx: int, nparams: int) -> str:
    params = ",".join(["string"] * nparams)
    return f"g.C{idx % 3}.m{idx}({params})->string"


def gen_program(
    rng: random.Random,
    max_methods: int = 10,
    max_lines: int = 20,
    straight_line: bool = False,
) -> str:
    """Canonical IR text for a random well-formed program."""
    n_methods = rng.randint(1, max_methods)
    param_counts = [rng.randint(0, 3) for _ in range(n_methods)]
    sigs = [_method_sig(i, param_counts[i]) for i in range(n_methods)]

    bodies: list[list[str]] = []
    for i in range(n_methods):
        n_lines = rng.randint(1, max_lines)
        avail = [f"p{j}" for j in range(param_counts[i])]
        lines: list[str] = []
        for line_no in range(1, n_lines + 1):
            lines.append(self_stmt(rng, i, n_methods, param_counts, sigs,
                                   avail, line_no, n_lines, straight_line))
        bodies.append(lines)

    chunks: list[str] = []
    by_class: dict[int, list[int]] = {}
    for i in range(n_methods):
        by_class.setdefault(i % 3, []).append(i)
    for cls_idx in sorted(by_class):
        chunks.append(f"class g.C{cls_idx} {{")
        for i in by_class[cls_idx]:
            names = ",".join(f"p{j}" for j in range(param_counts[i]))
            chunks.append(f"  method {sigs[i]} ({names}) {{")
            for line in bodies[i]:
                chunks.append(f"    {line}")
            chunks.append("  }")
        chunks.append("}")
    return "\n".join(chunks) + "\n"


def self_stmt(rng, i, n_methods, param_counts, sigs, avail,
              line_no, n_lines, straight_line) -> str:
    """One random statement; appends any newly defined variable to avail."""

    def fresh() -> str:
        v = f"v{rng.randint(0, 9)}"
        if v not in avail:
            avail.append(v)
        return v

    def some_args(n: int) -> str:
        toks = []
        for _ in range(n):
            if avail and rng.random() < 0.8:
                toks.append(rng.choice(avail))
            else:
                toks.append(str(rng.randint(0, 99)))
        return ",".join(toks)

    choices = ["const", "ext", "nop"]
    if avail:
        choices += ["copy", "ext", "sinkish"]
    if n_methods > 1:
        choices.append("internal")
    if not straight_line:
        choices += ["branch", "goto"]
        if line_no == n_lines or rng.random() < 0.1:
            choices.append("return")
    elif line_no == n_lines:
        choices = ["return"]

    kind = rng.choice(choices)
    if kind == "const":
        return f"{fresh()} = const {rng.randint(0, 999)}"
    if kind == "copy":
        src = rng.choice(avail)
        return f"{fresh()} = {src}"
    if kind in ("ext", "sinkish"):
        name, nparams, has_result = rng.choice(
            EXTERNAL_POOL if kind == "ext" else EXTERNAL_POOL[3:5]
        )
        call = f"call {_ext_sig(name, nparams, has_result)}({some_args(nparams)})"
        if has_result and rng.random() < 0.8:
            return f"{fresh()} = {call}"
        return call
    if kind == "internal":
        j = rng.randrange(n_methods)
        call = f"call {sigs[j]}({some_args(param_counts[j])})"
        if rng.random() < 0.7:
            return f"{fresh()} = {call}"
        return call
    if kind == "branch" and avail:
        return f"if {rng.choice(avail)} goto {rng.randint(1, n_lines)}"
    if kind == "goto":
        return f"goto {rng.randint(1, n_lines)}"
    if kind == "return":
        if avail and rng.random() < 0.7:
            return f"return {rng.choice(avail)}"
        return "return"
    return "nop"


def gen_dag_program(rng: random.Random, max_nodes: int = 30) -> tuple[str, list[tuple[int, int]], int]:
    """Acyclic call structure: edges only from lower to higher indices.

    Returns (ir_text, edge list over method indices, site method index).
    Method i is named so that some indices classify as entry points.
    """
    n = rng.randint(2, max_nodes)
    edges: list[tuple[int, int]] = []
    for j in range(1, n):
        for i in range(j):
            if rng.random() < min(0.25, 4.0 / n):
                edges.append((i, j))
    site_idx = n - 1

    entry_names = ["onClick", "onCreate", "onReceive", "onStartCommand", "helper"]
    names = [
        rng.choice(entry_names) if rng.random() < 0.4 else "helper"
        for _ in range(n)
    ]
    # qualified, unique signatures: class per node keeps component kinds simple
    sigs = [f"dag.N{i}.{names[i]}()->void" for i in range(n)]

    out_edges: dict[int, list[int]] = {}
    for a, b in edges:
        out_edges.setdefault(a, []).append(b)

    chunks = []
    for i in range(n):
        chunks.append(f"class dag.N{i} {{")
        chunks.append(f"  method {sigs[i]} () {{")
        for b in sorted(set(out_edges.get(i, []))):
            chunks.append(f"    call {sigs[b]}()")
        chunks.append(f"    call ext.api.Util.log(string)->void(\"x\")")
        chunks.append("  }")
        chunks.append("}")
    return "\n".join(chunks) + "\n", edges, site_idx


def dag_manifest_text(n: int) -> str:
    """Marks every even-indexed class a Receiver and odd a Service, so
    `onReceive`/`onStartCommand` rules can fire."""
    lines = [
        "package: dag.app",
        "category: generated",
        "description: synthetic",
    ]
    for i in range(n):
        kind = "Receiver" if i % 2 == 0 else "Service"
        lines.append(f"component:{kind}:dag.N{i}")
    return "\n".join(lines) + "\n"
