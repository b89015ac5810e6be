"""Three-tier triage: manifest screening, per-candidate forensics, verdict.

Tier 1 screens the manifest for intent/permission mismatches and prunes the
API index down to a capped candidate set.  Tier 2 runs one observe-think-act
session per candidate over the analysis toolbox.  Tier 3 fuses the risk
signals with the per-candidate evidence into the final JSON report.  Every
model exchange is metered into a cost ledger under its tier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from string import Template

from .analysis import (
    ContextWindow,
    Slice,
    TaintResult,
    TriggerChain,
    backward_slice,
    best_trigger,
    extract_context,
    taint_reachability,
    trigger_paths,
)
from .backend import CostLedger, ModelRouter
from .catalog import ApiCatalog, EntryCatalog
from .errors import (
    BackendError,
    EmptyManifestError,
    SchemaViolationError,
    ToolError,
    TriageError,
)
from .index import ApiIndex, CallGraph, CallSite, build_api_index, build_call_graph
from .ir import AppBundle, Manifest, parse_sig, render_stmt

SEVERITIES = ("High", "Medium", "Low")
_SEV_RANK = {s: i for i, s in enumerate(SEVERITIES)}

TOOL_NAMES = ("extract_context", "trigger_paths", "taint_reachability", "backward_slice")


def _template(name: str) -> Template:
    text = resources.files("droidtriage").joinpath(f"data/prompts/{name}").read_text("utf-8")
    return Template(text)


@dataclass
class PipelineBudgets:
    max_iterations: int = 8
    candidate_cap: int = 15
    taint_depth: int = 3
    trigger_depth: int = 5
    context_radius: int = 20


@dataclass(frozen=True)
class RiskSignal:
    permission: str
    reason: str
    severity: str


@dataclass
class ReconReport:
    declared_intents: list[str]
    requested_permissions: list[str]
    risk_signals: list[RiskSignal]
    candidates: list[CallSite]
    # site rendering -> (permission, severity) of the signal that pulled it in
    origins: dict[str, tuple[str, str]] = field(default_factory=dict)


@dataclass(frozen=True)
class ActionRecord:
    tool: str
    arguments: dict
    result_digest: str


@dataclass(frozen=True)
class TranscriptStep:
    observation: str
    thought: str
    action: ActionRecord


@dataclass
class AgentTranscript:
    steps: list[TranscriptStep] = field(default_factory=list)
    terminated_by: str = "BudgetExhausted"  # or "AgentConcluded"

    @property
    def step_count(self) -> int:
        return len(self.steps)


@dataclass
class EvidenceVector:
    candidate: CallSite
    trigger: TriggerChain | None
    taint: TaintResult | None
    slice: Slice | None
    contexts: list[ContextWindow]
    agent_summary: str
    transcript: AgentTranscript
    permission: str = ""
    severity: str = "Low"

    @property
    def trigger_kind(self) -> str:
        return self.trigger.entry_kind if self.trigger is not None else "Unknown"

    @property
    def sink_category(self) -> str:
        if self.taint is not None and self.taint.reached_sinks:
            return self.taint.reached_sinks[0].category
        return "none"

    @property
    def hit_count(self) -> int:
        return len(self.taint.reached_sinks) if self.taint is not None else 0


@dataclass(frozen=True)
class EvidenceRef:
    candidate: str
    trigger: str
    sink: str
    rationale: str


@dataclass
class VerdictReport:
    app_id: str
    verdict: str  # "Benign" | "Malicious"
    threat_category: str
    confidence: float
    evidence_chain: list[EvidenceRef]
    rationale: str

    def to_dict(self) -> dict:
        return {
            "app_id": self.app_id,
            "verdict": self.verdict,
            "threat_category": self.threat_category,
            "confidence": self.confidence,
            "evidence_chain": [
                {
                    "candidate": r.candidate,
                    "trigger": r.trigger,
                    "sink": r.sink,
                    "rationale": r.rationale,
                }
                for r in self.evidence_chain
            ],
            "rationale": self.rationale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# tier 1: reconnaissance
# ---------------------------------------------------------------------------


def recon_screen(
    manifest: Manifest,
    api_index: ApiIndex,
    catalog: ApiCatalog,
    router: ModelRouter,
    cap: int,
    ledger: CostLedger,
) -> ReconReport:
    if not manifest.package:
        raise EmptyManifestError("manifest has no package")
    payload = {
        "package": manifest.package,
        "category": manifest.category,
        "description": manifest.description,
        "permissions": list(manifest.permissions),
        "components": [
            {
                "class": c.name,
                "kind": c.kind,
                "actions": list(c.intent_actions),
                "exported": c.exported,
            }
            for c in manifest.components
        ],
    }
    prompt = _template("recon.txt").substitute(
        payload=json.dumps(payload, indent=1, sort_keys=True)
    )
    exchange = router.complete("recon", [("user", prompt)])
    ledger.append(exchange)
    try:
        parsed = json.loads(exchange.response)
        raw_signals = parsed["risk_signals"]
        declared = [str(x) for x in parsed.get("declared_intents", [])]
        if not isinstance(raw_signals, list):
            raise TypeError("risk_signals must be a list")
    except (ValueError, KeyError, TypeError) as exc:
        raise BackendError(f"unparseable screening response: {exc}") from None

    requested = set(manifest.permissions)
    signals = []
    for item in raw_signals:
        if not isinstance(item, dict):
            continue
        perm = item.get("permission", "")
        sev = item.get("severity", "")
        if perm in requested and sev in SEVERITIES:
            signals.append(RiskSignal(perm, str(item.get("reason", "")), sev))
    signals.sort(key=lambda s: (_SEV_RANK[s.severity], s.permission))

    chosen: dict[str, tuple[CallSite, str, str]] = {}
    for signal in signals:
        if signal.severity not in ("High", "Medium"):
            continue
        for pattern in catalog.apis_for_permission(signal.permission):
            for key in api_index.sites:
                if not pattern.matches(parse_sig(key)):
                    continue
                for site in api_index.sites[key]:
                    k = site.render()
                    prev = chosen.get(k)
                    if prev is None or _SEV_RANK[signal.severity] < _SEV_RANK[prev[2]]:
                        chosen[k] = (site, signal.permission, signal.severity)

    ordered = sorted(
        chosen.values(),
        key=lambda t: (_SEV_RANK[t[2]], str(t[0].callee), t[0].line, str(t[0].method)),
    )[:cap]
    report = ReconReport(
        declared_intents=declared,
        requested_permissions=list(manifest.permissions),
        risk_signals=signals,
        candidates=[site for site, _p, _s in ordered],
    )
    for site, perm, sev in ordered:
        report.origins[site.render()] = (perm, sev)
    return report


# ---------------------------------------------------------------------------
# tier 2: forensic trace sessions
# ---------------------------------------------------------------------------


@dataclass
class ToolBox:
    """Per-candidate tool dispatch; accumulates the best result of each kind."""

    bundle: AppBundle
    graph: CallGraph
    api_catalog: ApiCatalog
    entry_catalog: EntryCatalog
    site: CallSite
    budgets: PipelineBudgets
    contexts: list[ContextWindow] = field(default_factory=list)
    chains: list[TriggerChain] | None = None
    taint: TaintResult | None = None
    slice: Slice | None = None

    def dispatch(self, action: str, args: dict) -> tuple[dict, str]:
        program = self.bundle.program
        if action == "extract_context":
            radius = int(args.get("radius", self.budgets.context_radius))
            window = extract_context(program, self.site, radius)
            self.contexts.append(window)
            obs = {
                "tool": action,
                "method": str(self.site.method),
                "start_line": window.start_line,
                "end_line": window.end_line,
                "truncated_head": window.truncated_head,
                "truncated_tail": window.truncated_tail,
                "lines": list(window.lines),
            }
            return obs, f"lines {window.start_line}..{window.end_line} of {self.site.method}"
        if action == "trigger_paths":
            depth = int(args.get("max_depth", self.budgets.trigger_depth))
            chains = trigger_paths(self.graph, self.site, self.entry_catalog, depth)
            self.chains = chains
            obs = {
                "tool": action,
                "count": len(chains),
                "chains": [
                    {"entry_kind": c.entry_kind, "path": [str(m) for m in c.path]}
                    for c in chains[:10]
                ],
            }
            kinds = sorted({c.entry_kind for c in chains}) or ["none"]
            return obs, f"{len(chains)} chain(s), kinds {','.join(kinds)}"
        if action == "taint_reachability":
            depth = int(args.get("depth_limit", self.budgets.taint_depth))
            result = taint_reachability(
                program, self.graph, self.site, self.api_catalog, depth
            )
            self.taint = result
            obs = {
                "tool": action,
                "source": self.site.render(),
                "searched_depth": result.searched_depth,
                "reached_sinks": [
                    {
                        "sink": str(h.site.callee),
                        "method": str(h.site.method),
                        "line": h.site.line,
                        "category": h.category,
                        "tainted_arg": h.tainted_arg,
                        "witness": [[str(m), l] for m, l in h.witness],
                    }
                    for h in result.reached_sinks
                ],
            }
            return obs, f"{len(result.reached_sinks)} sink hit(s)"
        if action == "backward_slice":
            method, line, var = self._slice_target(args)
            result = backward_slice(program, method, line, var)
            self.slice = result
            mdef = {m.signature: m for m in program.methods()}[method]
            obs = {
                "tool": action,
                "method": str(method),
                "line": line,
                "var": var,
                "kept_lines": result.kept_lines,
                "removed_count": result.removed_count,
                "statements": [
                    f"{l}: {render_stmt(mdef.body[l - 1])}" for l in result.kept_lines
                ],
            }
            return obs, f"kept {len(result.kept_lines)} line(s), removed {result.removed_count}"
        raise ToolError(f"unknown tool {action!r}")

    def _slice_target(self, args: dict):
        if "method" in args and "line" in args and "var" in args:
            return parse_sig(str(args["method"])), int(args["line"]), str(args["var"])
        if self.taint is not None and self.taint.reached_sinks:
            hit = self.taint.reached_sinks[0]
            return hit.site.method, hit.site.line, hit.tainted_arg
        if self.site.result_var is not None:
            return self.site.method, self.site.line, self.site.result_var
        raise ToolError("no slice target: give method/line/var explicitly")


def trace_candidate(
    candidate: CallSite,
    toolbox: ToolBox,
    router: ModelRouter,
    budget: int,
    ledger: CostLedger,
    permission: str = "",
    severity: str = "Low",
) -> EvidenceVector:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    payload = {
        "candidate": candidate.render(),
        "method": str(candidate.method),
        "line": candidate.line,
        "callee": str(candidate.callee),
        "result_var": candidate.result_var,
        "permission": permission,
        "severity": severity,
    }
    system = _template("trace_system.txt").substitute()
    task = _template("trace_task.txt").substitute(
        payload=json.dumps(payload, indent=1, sort_keys=True)
    )
    messages: list[tuple[str, str]] = [("system", system), ("user", task)]
    transcript = AgentTranscript()
    summary = ""
    observation = task

    for _step in range(budget):
        exchange = router.complete("trace", messages)
        ledger.append(exchange)
        messages.append(("assistant", exchange.response))
        thought, action, args = _parse_action(exchange.response)
        if action == "conclude":
            summary = str(args.get("summary", ""))
            transcript.steps.append(
                TranscriptStep(observation, thought, ActionRecord("conclude", args, summary))
            )
            transcript.terminated_by = "AgentConcluded"
            break
        if action in TOOL_NAMES:
            try:
                obs_data, digest = toolbox.dispatch(action, args)
            except (ToolError, ValueError, TypeError, KeyError) as exc:
                # bad arguments from a live model are session noise, not a
                # pipeline failure
                obs_data = {"tool": action, "error": type(exc).__name__, "message": str(exc)}
                digest = f"error: {exc}"
            transcript.steps.append(
                TranscriptStep(observation, thought, ActionRecord(action, args, digest))
            )
        else:
            # invalid action: correct the model but keep the transcript to
            # real tool steps; the attempt still consumes budget
            obs_data = {
                "tool": action,
                "error": "UnknownTool",
                "message": f"choose one of {', '.join(TOOL_NAMES + ('conclude',))}",
            }
        observation = json.dumps(obs_data, indent=1, sort_keys=True)
        messages.append(("user", observation))

    return EvidenceVector(
        candidate=candidate,
        trigger=best_trigger(toolbox.chains) if toolbox.chains else None,
        taint=toolbox.taint,
        slice=toolbox.slice,
        contexts=toolbox.contexts,
        agent_summary=summary,
        transcript=transcript,
        permission=permission,
        severity=severity,
    )


def _parse_action(response: str) -> tuple[str, str, dict]:
    try:
        obj = json.loads(response)
        action = str(obj["action"])
        args = obj.get("args") or {}
        if not isinstance(args, dict):
            args = {}
        return str(obj.get("thought", "")), action, args
    except (ValueError, KeyError, TypeError):
        return "", "__unparseable__", {}


# ---------------------------------------------------------------------------
# tier 3: verdict fusion
# ---------------------------------------------------------------------------


def adjudicate(
    recon: ReconReport,
    evidence: list[EvidenceVector],
    router: ModelRouter,
    ledger: CostLedger,
    app_id: str,
) -> VerdictReport:
    payload = {
        "app_id": app_id,
        "signals": [
            {"permission": s.permission, "severity": s.severity} for s in recon.risk_signals
        ],
        "vectors": [
            {
                "candidate": v.candidate.render(),
                "source_class": v.candidate.callee.class_name,
                "trigger": v.trigger_kind,
                "sink": v.sink_category,
                "hits": v.hit_count,
                "severity": v.severity,
                "permission": v.permission,
            }
            for v in evidence
        ],
    }
    prompt = _template("verdict.txt").substitute(
        payload=json.dumps(payload, separators=(",", ":"), sort_keys=True)
    )
    messages = [("user", prompt)]
    known = {v.candidate.render() for v in evidence}
    last_error = ""
    for attempt in range(2):
        exchange = router.complete("verdict", messages)
        ledger.append(exchange)
        try:
            return _parse_verdict(exchange.response, app_id, known)
        except SchemaViolationError as exc:
            last_error = str(exc)
    raise SchemaViolationError(f"verdict failed schema validation twice: {last_error}")


def _parse_verdict(response: str, app_id: str, known_candidates: set[str]) -> VerdictReport:
    try:
        obj = json.loads(response)
    except ValueError as exc:
        raise SchemaViolationError(f"not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaViolationError("verdict must be a JSON object")
    required = {"verdict", "threat_category", "confidence", "evidence_chain", "rationale"}
    missing = required - obj.keys()
    if missing:
        raise SchemaViolationError(f"missing fields {sorted(missing)}")
    verdict = obj["verdict"]
    if verdict not in ("Benign", "Malicious"):
        raise SchemaViolationError(f"bad verdict {verdict!r}")
    try:
        confidence = float(obj["confidence"])
    except (TypeError, ValueError):
        raise SchemaViolationError("confidence not a number") from None
    if not (0.0 <= confidence <= 1.0):
        raise SchemaViolationError("confidence outside [0,1]")
    chain_raw = obj["evidence_chain"]
    if not isinstance(chain_raw, list):
        raise SchemaViolationError("evidence_chain must be a list")
    chain = []
    for item in chain_raw:
        if not isinstance(item, dict) or not {"candidate", "trigger", "sink", "rationale"} <= item.keys():
            raise SchemaViolationError("bad evidence_chain item")
        if item["candidate"] not in known_candidates:
            raise SchemaViolationError(f"evidence ref {item['candidate']!r} matches no vector")
        chain.append(
            EvidenceRef(
                str(item["candidate"]), str(item["trigger"]),
                str(item["sink"]), str(item["rationale"]),
            )
        )
    if verdict == "Malicious" and not chain:
        raise SchemaViolationError("malicious verdict without evidence chain")
    return VerdictReport(
        app_id=app_id,
        verdict=verdict,
        threat_category=str(obj["threat_category"]),
        confidence=confidence,
        evidence_chain=chain,
        rationale=str(obj["rationale"]),
    )


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------


@dataclass
class Catalogs:
    api: ApiCatalog
    entry: EntryCatalog


class PipelineStageError(TriageError):
    def __init__(self, tier: str, cause: Exception):
        super().__init__(f"[{tier}] {cause}")
        self.tier = tier
        self.cause = cause


def run_pipeline(
    bundle: AppBundle,
    catalogs: Catalogs,
    router: ModelRouter,
    budgets: PipelineBudgets | None = None,
) -> tuple[VerdictReport, CostLedger]:
    budgets = budgets or PipelineBudgets()
    ledger = CostLedger()
    graph = build_call_graph(bundle.program)
    api_index = build_api_index(bundle.program, catalogs.api)
    entry_catalog = catalogs.entry.bound(bundle.manifest)

    try:
        recon = recon_screen(
            bundle.manifest, api_index, catalogs.api, router,
            budgets.candidate_cap, ledger,
        )
    except TriageError as exc:
        raise PipelineStageError("recon", exc) from exc

    vectors: list[EvidenceVector] = []
    try:
        for site in recon.candidates:
            perm, sev = recon.origins.get(site.render(), ("", "Low"))
            toolbox = ToolBox(bundle, graph, catalogs.api, entry_catalog, site, budgets)
            vectors.append(
                trace_candidate(
                    site, toolbox, router, budgets.max_iterations, ledger,
                    permission=perm, severity=sev,
                )
            )
    except TriageError as exc:
        raise PipelineStageError("trace", exc) from exc

    try:
        report = adjudicate(recon, vectors, router, ledger, bundle.app_id)
    except TriageError as exc:
        raise PipelineStageError("verdict", exc) from exc
    return report, ledger
