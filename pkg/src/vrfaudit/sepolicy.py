"""SELinux CIL policy parsing: allow/neverallow extraction, rule counts,
cross-version diffs and untrusted-domain exposure findings.

Rules are counted syntactically; attributes, classpermission names and
macros are never resolved (that would require full policy compilation).
"""

from __future__ import annotations

import re
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import AuditError


class UnbalancedParens(AuditError):
    """S-expression nesting error, with file and line."""


class RuleKind(Enum):
    ALLOW = "allow"
    NEVERALLOW = "neverallow"


_RULE_HEADS = {"allow": RuleKind.ALLOW, "neverallow": RuleKind.NEVERALLOW}

DEFAULT_DOMAIN_PREFIXES = ("untrusted_app", "isolated_app")
DEFAULT_PROPERTY_SUFFIXES = ("_prop",)
DEFAULT_SENSITIVE_TYPES = ("hwservicemanager_prop",)

_TOKEN_RE = re.compile(r'\(|\)|;[^\n]*|"(?:[^"\\]|\\.)*"|[^\s()";]+')


@dataclass(frozen=True)
class CilRule:
    kind: RuleKind
    source: str
    target: str
    # (class, frozenset of perms); a named classpermission reference is
    # recorded as (name, empty set), unresolved by design.
    class_perms: tuple[tuple[str, frozenset[str]], ...]
    origin_file: str
    origin_line: int
    conditional: bool = False

    def canonical_key(self) -> str:
        parts = []
        for cls, perms in sorted(self.class_perms, key=lambda cp: (cp[0], sorted(cp[1]))):
            if perms:
                parts.append(f"({cls} ({' '.join(sorted(perms))}))")
            else:
                parts.append(cls)
        return f"({self.kind.value} {self.source} {self.target} {' '.join(parts)})"


def serialize_rules(rules: Iterable[CilRule]) -> str:
    """Normalized CIL text; parsing it back yields the same canonical keys."""
    return "\n".join(rule.canonical_key() for rule in rules) + "\n"


@dataclass
class CilRuleSet:
    rules: tuple[CilRule, ...]
    parse_diagnostics: Counter = field(default_factory=Counter)

    @property
    def allow_count(self) -> int:
        return sum(1 for r in self.rules if r.kind is RuleKind.ALLOW)

    @property
    def neverallow_count(self) -> int:
        return sum(1 for r in self.rules if r.kind is RuleKind.NEVERALLOW)

    def key_counter(self, kind: Optional[RuleKind] = None) -> Counter:
        return Counter(
            r.canonical_key() for r in self.rules if kind is None or r.kind is kind
        )


def rule_counts(ruleset: CilRuleSet) -> tuple[int, int]:
    return ruleset.allow_count, ruleset.neverallow_count


def _tokenize(text: str, origin: str):
    """Yield (token, line) pairs; ';' comments and quoted strings handled."""
    line_starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            line_starts.append(i + 1)

    def line_of(pos: int) -> int:
        return bisect_right(line_starts, pos)

    for match in _TOKEN_RE.finditer(text):
        token = match.group(0)
        if token.startswith(";"):
            continue
        yield token, line_of(match.start())


def _parse_forms(text: str, origin: str) -> tuple[list, dict[int, int]]:
    """Parse s-expressions into nested lists of atom strings.

    Returns the top-level forms plus a map from list identity to the
    line of its opening paren.
    """
    top: list = []
    lines: dict[int, int] = {}
    stack: list[tuple[list, int]] = []
    current = top
    for token, line in _tokenize(text, origin):
        if token == "(":
            new: list = []
            lines[id(new)] = line
            current.append(new)
            stack.append((current, line))
            current = new
        elif token == ")":
            if not stack:
                raise UnbalancedParens(f"{origin}:{line}: unexpected ')'")
            current, _ = stack.pop()
        else:
            current.append(token)
    if stack:
        _, line = stack[-1]
        raise UnbalancedParens(f"{origin}:{line}: unclosed '('")
    return top, lines


def _atoms_in(expr) -> list[str]:
    if isinstance(expr, str):
        return [expr]
    atoms: list[str] = []
    for item in expr:
        atoms.extend(_atoms_in(item))
    return atoms


def _rule_from_form(
    form: list, origin: str, line: int, conditional: bool
) -> Optional[CilRule]:
    kind = _RULE_HEADS[form[0]]
    if len(form) < 4 or not isinstance(form[1], str) or not isinstance(form[2], str):
        return None
    class_perms: list[tuple[str, frozenset[str]]] = []
    for spec in form[3:]:
        if isinstance(spec, str):
            class_perms.append((spec, frozenset()))  # named classpermission
        elif spec and isinstance(spec[0], str):
            perms = frozenset(a for part in spec[1:] for a in _atoms_in(part))
            class_perms.append((spec[0], perms))
        else:
            return None
    if not class_perms:
        return None
    return CilRule(
        kind=kind,
        source=form[1],
        target=form[2],
        class_perms=tuple(class_perms),
        origin_file=origin,
        origin_line=line,
        conditional=conditional,
    )


def _walk(forms, origin, conditional, rules, diagnostics, lines):
    for form in forms:
        if not isinstance(form, list) or not form:
            continue
        head = form[0]
        if isinstance(head, list):
            _walk(form, origin, conditional, rules, diagnostics, lines)
            continue
        if head in _RULE_HEADS:
            rule = _rule_from_form(form, origin, lines.get(id(form), 0), conditional)
            if rule is None:
                diagnostics[f"malformed_{head}"] += 1
            else:
                rules.append(rule)
            continue
        if head == "booleanif":
            # rules from both branches, tagged conditional
            _walk(form[1:], origin, True, rules, diagnostics, lines)
            continue
        diagnostics[head] += 1
        _walk(form[1:], origin, conditional, rules, diagnostics, lines)


def parse_cil_text(text: str, origin: str = "<text>") -> CilRuleSet:
    forms, lines = _parse_forms(text, origin)
    rules: list[CilRule] = []
    diagnostics: Counter = Counter()
    _walk(forms, origin, False, rules, diagnostics, lines)
    return CilRuleSet(rules=tuple(rules), parse_diagnostics=diagnostics)


def parse_cil(files: Iterable[Path]) -> CilRuleSet:
    """Parse and merge allow/neverallow rules from .cil files."""
    rules: list[CilRule] = []
    diagnostics: Counter = Counter()
    for path in files:
        text = Path(path).read_text(encoding="utf-8", errors="replace")
        part = parse_cil_text(text, origin=str(path))
        rules.extend(part.rules)
        diagnostics.update(part.parse_diagnostics)
    return CilRuleSet(rules=tuple(rules), parse_diagnostics=diagnostics)


@dataclass(frozen=True)
class PolicyDiff:
    added_allow: Counter
    removed_allow: Counter
    added_neverallow: Counter
    removed_neverallow: Counter

    @property
    def empty(self) -> bool:
        return not (
            self.added_allow
            or self.removed_allow
            or self.added_neverallow
            or self.removed_neverallow
        )


def diff_rulesets(old: CilRuleSet, new: CilRuleSet) -> PolicyDiff:
    """Multiset difference of canonical rule keys, both directions."""
    old_allow = old.key_counter(RuleKind.ALLOW)
    new_allow = new.key_counter(RuleKind.ALLOW)
    old_never = old.key_counter(RuleKind.NEVERALLOW)
    new_never = new.key_counter(RuleKind.NEVERALLOW)
    return PolicyDiff(
        added_allow=new_allow - old_allow,
        removed_allow=old_allow - new_allow,
        added_neverallow=new_never - old_never,
        removed_neverallow=old_never - new_never,
    )


@dataclass(frozen=True)
class ExposureFinding:
    source: str
    target: str
    reason: str
    rule_key: str


def untrusted_domain_exposure(
    ruleset: CilRuleSet,
    domain_prefixes: tuple[str, ...] = DEFAULT_DOMAIN_PREFIXES,
    property_type_suffixes: tuple[str, ...] = DEFAULT_PROPERTY_SUFFIXES,
    sensitive_types: tuple[str, ...] = DEFAULT_SENSITIVE_TYPES,
) -> list[ExposureFinding]:
    """allow rules granting untrusted/isolated domains access to property
    types or explicitly sensitive types."""
    domain_prefixes = tuple(domain_prefixes)
    property_type_suffixes = tuple(property_type_suffixes)
    sensitive_types = tuple(sensitive_types)
    findings = []
    for rule in ruleset.rules:
        if rule.kind is not RuleKind.ALLOW:
            continue
        if not rule.source.startswith(domain_prefixes):
            continue
        if rule.target in sensitive_types:
            reason = "sensitive type"
        elif rule.target.endswith(property_type_suffixes):
            reason = "property type"
        else:
            continue
        findings.append(
            ExposureFinding(
                source=rule.source,
                target=rule.target,
                reason=reason,
                rule_key=rule.canonical_key(),
            )
        )
    findings.sort(key=lambda f: f.rule_key)
    return findings
