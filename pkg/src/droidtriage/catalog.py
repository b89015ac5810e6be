"""System-API and entry-point catalogs.

Both catalogs are plain-text config shipped with the package and replaceable
at run time, so coverage can grow without code changes.

`.cat` lines:  api:<sig-or-prefix> | source:<sig> | sink:<category>:<sig>
               | perm:<PERMISSION>-><sig-or-prefix>
`.epc` lines:  user:<method-name> | system:<method-name>@<component-kind>
               | lifecycle:<method-name>
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .ir import COMPONENT_KINDS, Manifest, MethodSig

SINK_CATEGORIES = ("network", "storage", "telephony")


@dataclass(frozen=True)
class ApiPattern:
    """Exact canonical signature, or a class-prefix wildcard `pkg.Cls.*`."""

    text: str

    @property
    def is_prefix(self) -> bool:
        return self.text.endswith(".*")

    def matches(self, sig: MethodSig) -> bool:
        if self.is_prefix:
            stem = self.text[:-2]
            return sig.class_name == stem or sig.class_name.startswith(stem + ".")
        return str(sig) == self.text


def _parse_pattern(text: str, line_no: int) -> ApiPattern:
    text = text.strip()
    if text.endswith(".*") or "(" in text:
        return ApiPattern(text)
    raise ConfigError(f"catalog line {line_no}: {text!r} is neither a signature nor a class prefix")


@dataclass
class ApiCatalog:
    """The system-API surface the pipeline treats as sensitive."""

    system_apis: list[ApiPattern] = field(default_factory=list)
    sources: list[ApiPattern] = field(default_factory=list)
    sinks: dict[str, list[ApiPattern]] = field(default_factory=dict)
    sensitive_map: dict[str, list[ApiPattern]] = field(default_factory=dict)

    def is_system(self, sig: MethodSig) -> bool:
        return any(p.matches(sig) for p in self.system_apis)

    def is_source(self, sig: MethodSig) -> bool:
        return any(p.matches(sig) for p in self.sources)

    def sink_category(self, sig: MethodSig) -> str | None:
        for category in SINK_CATEGORIES:
            for p in self.sinks.get(category, ()):
                if p.matches(sig):
                    return category
        return None

    def apis_for_permission(self, permission: str) -> list[ApiPattern]:
        return self.sensitive_map.get(permission, [])

    @classmethod
    def parse(cls, text: str) -> "ApiCatalog":
        cat = cls()
        seen: set[str] = set()
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("api:"):
                pat = _parse_pattern(line[4:], line_no)
                cat._add_api(pat, seen)
            elif line.startswith("source:"):
                pat = _parse_pattern(line[7:], line_no)
                cat.sources.append(pat)
                cat._add_api(pat, seen)
            elif line.startswith("sink:"):
                rest = line[5:]
                if ":" not in rest:
                    raise ConfigError(f"catalog line {line_no}: sink needs category")
                category, sig_text = rest.split(":", 1)
                category = category.strip()
                if category not in SINK_CATEGORIES:
                    raise ConfigError(f"catalog line {line_no}: unknown sink category {category!r}")
                pat = _parse_pattern(sig_text, line_no)
                cat.sinks.setdefault(category, []).append(pat)
                cat._add_api(pat, seen)
            elif line.startswith("perm:"):
                rest = line[5:]
                if "->" not in rest:
                    raise ConfigError(f"catalog line {line_no}: perm needs '->'")
                perm, pat_text = rest.split("->", 1)
                pat = _parse_pattern(pat_text, line_no)
                cat.sensitive_map.setdefault(perm.strip(), []).append(pat)
            else:
                raise ConfigError(f"catalog line {line_no}: unknown entry {line!r}")
        return cat

    def _add_api(self, pat: ApiPattern, seen: set[str]) -> None:
        if pat.text not in seen:
            seen.add(pat.text)
            self.system_apis.append(pat)


ENTRY_KINDS = ("UserInteraction", "SystemEvent", "Lifecycle", "Unknown")


@dataclass
class EntryCatalog:
    """Classifies methods as app entry points.

    System-event rules are conditional on the method's class being declared
    in the manifest as a component of the stated kind; binding a manifest
    fills in that component map.
    """

    user: set[str] = field(default_factory=set)
    system: dict[str, set[str]] = field(default_factory=dict)  # method -> kinds
    lifecycle: set[str] = field(default_factory=set)
    component_kinds: dict[str, set[str]] = field(default_factory=dict)  # class -> kinds

    @classmethod
    def parse(cls, text: str) -> "EntryCatalog":
        cat = cls()
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("user:"):
                cat.user.add(line[5:].strip())
            elif line.startswith("system:"):
                rest = line[7:]
                if "@" not in rest:
                    raise ConfigError(f"entry catalog line {line_no}: system rule needs '@kind'")
                name, kind = rest.split("@", 1)
                kind = kind.strip()
                if kind not in COMPONENT_KINDS:
                    raise ConfigError(f"entry catalog line {line_no}: unknown kind {kind!r}")
                cat.system.setdefault(name.strip(), set()).add(kind)
            elif line.startswith("lifecycle:"):
                cat.lifecycle.add(line[10:].strip())
            else:
                raise ConfigError(f"entry catalog line {line_no}: unknown entry {line!r}")
        return cat

    def bound(self, manifest: Manifest) -> "EntryCatalog":
        comp: dict[str, set[str]] = {}
        for c in manifest.components:
            comp.setdefault(c.name, set()).add(c.kind)
        return EntryCatalog(set(self.user), dict(self.system), set(self.lifecycle), comp)

    def classify(self, sig: MethodSig) -> str | None:
        """Entry kind for a method, or None when it is not an entry point."""
        if sig.method_name in self.user:
            return "UserInteraction"
        kinds = self.system.get(sig.method_name)
        if kinds and self.component_kinds.get(sig.class_name, set()) & kinds:
            return "SystemEvent"
        if sig.method_name in self.lifecycle:
            return "Lifecycle"
        return None
