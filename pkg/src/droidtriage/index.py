"""Global call graph and the system-API inverted index.

Both structures are built once per bundle and never mutated, so concurrent
agent sessions can share them freely.  Edges are a multiset: two calls from
the same caller to the same callee at different lines stay distinct, because
forensics later needs each concrete site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import ApiCatalog
from .ir import Invoke, IrProgram, MethodSig, render_stmt


@dataclass(frozen=True)
class CallSite:
    """One concrete invocation of a callee, addressed by method and line."""

    method: MethodSig
    line: int
    callee: MethodSig
    result_var: str | None = None

    def render(self) -> str:
        return f"{self.callee} @ {self.method}:{self.line}"


@dataclass
class CallGraph:
    nodes: set[MethodSig]
    edges: list[tuple[MethodSig, MethodSig, int]]
    adjacency: dict[MethodSig, list[tuple[MethodSig, int]]]
    reverse: dict[MethodSig, list[tuple[MethodSig, int]]]
    defined: set[MethodSig]

    def callers_of(self, sig: MethodSig) -> list[MethodSig]:
        """Distinct callers in deterministic order (parallel edges merged)."""
        seen: dict[str, MethodSig] = {}
        for caller, _line in self.reverse.get(sig, []):
            seen.setdefault(str(caller), caller)
        return [seen[k] for k in sorted(seen)]


def build_call_graph(program: IrProgram) -> CallGraph:
    defined = {m.signature for m in program.methods()}
    nodes: set[MethodSig] = set(defined)
    edges: list[tuple[MethodSig, MethodSig, int]] = []
    for method in sorted(program.methods(), key=lambda m: str(m.signature)):
        for stmt in method.body:
            if isinstance(stmt, Invoke):
                nodes.add(stmt.callee)
                edges.append((method.signature, stmt.callee, stmt.line))
    adjacency: dict[MethodSig, list[tuple[MethodSig, int]]] = {n: [] for n in nodes}
    reverse: dict[MethodSig, list[tuple[MethodSig, int]]] = {n: [] for n in nodes}
    for caller, callee, line in edges:
        adjacency[caller].append((callee, line))
        reverse[callee].append((caller, line))
    return CallGraph(nodes, edges, adjacency, reverse, defined)


def extract_api_set(
    program: IrProgram, catalog: ApiCatalog
) -> tuple[set[MethodSig], set[MethodSig]]:
    """Distinct external callees, partitioned into (system, non-system)."""
    defined = {m.signature for m in program.methods()}
    external: set[MethodSig] = set()
    for method in program.methods():
        for stmt in method.body:
            if isinstance(stmt, Invoke) and stmt.callee not in defined:
                external.add(stmt.callee)
    system = {sig for sig in external if catalog.is_system(sig)}
    return system, external - system


@dataclass
class ApiIndex:
    """Signature -> call sites, restricted to the system-API surface."""

    sites: dict[str, list[CallSite]] = field(default_factory=dict)

    def lookup(self, sig: MethodSig | str) -> list[CallSite]:
        return list(self.sites.get(str(sig), []))

    def all_sites(self) -> list[CallSite]:
        out: list[CallSite] = []
        for key in sorted(self.sites):
            out.extend(self.sites[key])
        return out


def build_api_index(program: IrProgram, catalog: ApiCatalog) -> ApiIndex:
    defined = {m.signature for m in program.methods()}
    index = ApiIndex()
    for method in sorted(program.methods(), key=lambda m: str(m.signature)):
        for stmt in method.body:
            if not isinstance(stmt, Invoke):
                continue
            if stmt.callee in defined or not catalog.is_system(stmt.callee):
                continue
            site = CallSite(method.signature, stmt.line, stmt.callee, stmt.dst)
            index.sites.setdefault(str(stmt.callee), []).append(site)
    return index


def lookup(index: ApiIndex, sig: MethodSig | str) -> list[CallSite]:
    return index.lookup(sig)


def global_search(program: IrProgram, pattern: str) -> list[tuple[MethodSig, int, str]]:
    """Case-sensitive substring search over canonical statement renderings."""
    if not pattern:
        raise ValueError("empty search pattern")
    hits: list[tuple[MethodSig, int, str]] = []
    for method in sorted(program.methods(), key=lambda m: str(m.signature)):
        for stmt in method.body:
            rendered = render_stmt(stmt)
            if pattern in rendered:
                hits.append((method.signature, stmt.line, rendered))
    return hits
