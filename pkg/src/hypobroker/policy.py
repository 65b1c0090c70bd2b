"""Namespace policy model: immutable rule sets of (uid, service, namespace)
3-tuples, parsing and canonical serialization, dynamic updates, container
groups, and a thread-safe store that persists every applied update.
"""

from __future__ import annotations

import logging
import os
import re
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Union

from .errors import DuplicateRuleError, NoSuchGroup, PolicyParseError

log = logging.getLogger("hypobroker.policy")

GLOBAL_NAMESPACE = 0

_RULE_LINE = re.compile(r"^\s*(\d+)\s+(\S+)\s+(\d+)\s*$")
_BLANK_LINE = re.compile(r"^\s*(#.*)?$")


@dataclass(frozen=True)
class PolicyRule:
    uid: int
    service_name: str
    namespace: int

    def __post_init__(self) -> None:
        if self.uid < 0 or self.namespace < 0:
            raise ValueError("uid and namespace must be >= 0")


@dataclass(frozen=True)
class PolicySet:
    """Immutable snapshot of rules. A valid set holds at most one rule per
    (uid, service_name); the version counts applied update batches and is
    excluded from equality so parse/serialize round-trips compare clean."""

    rules: frozenset[PolicyRule] = frozenset()
    version: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        keys = {(r.uid, r.service_name) for r in self.rules}
        if len(keys) != len(self.rules):
            raise ValueError("duplicate (uid, service_name) keys in policy set")


@dataclass(frozen=True)
class ContainerGroup:
    """Named bundle of (service, namespace) bindings assigned to a uid as
    one atomic unit."""

    group_name: str
    bindings: frozenset[tuple[str, int]]

    def __post_init__(self) -> None:
        names = {service for service, _ in self.bindings}
        if len(names) != len(self.bindings):
            raise ValueError(f"group {self.group_name!r} binds a service twice")


# -- updates ----------------------------------------------------------------


@dataclass(frozen=True)
class SetRule:
    rule: PolicyRule


@dataclass(frozen=True)
class RemoveRule:
    uid: int
    service_name: str


@dataclass(frozen=True)
class AssignGroup:
    uid: int
    group_name: str


@dataclass(frozen=True)
class ClearUid:
    uid: int


PolicyUpdate = Union[SetRule, RemoveRule, AssignGroup, ClearUid]


def lookup_rule(policy: PolicySet, uid: int, service_name: str) -> int:
    """Namespace assigned to (uid, service_name), or the global namespace.

    Deliberately a linear scan: the lookup path pays per-request cost
    proportional to policy size, which the benchmark measures.
    """
    for rule in policy.rules:
        if rule.uid == uid and rule.service_name == service_name:
            return rule.namespace
    return GLOBAL_NAMESPACE


def parse_policy(text: str) -> PolicySet:
    """Parse a policy file: one ``uid service namespace`` rule per line,
    blank lines and ``#`` comments ignored. Duplicate (uid, service) lines
    are an error, not last-wins."""
    rules: list[PolicyRule] = []
    seen: dict[tuple[int, str], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if _BLANK_LINE.match(raw):
            continue
        m = _RULE_LINE.match(raw)
        if not m:
            raise PolicyParseError(lineno, f"malformed rule {raw.strip()!r}")
        uid, service, namespace = int(m.group(1)), m.group(2), int(m.group(3))
        if (uid, service) in seen:
            raise DuplicateRuleError(lineno, f"duplicate rule for uid {uid} service {service}")
        seen[(uid, service)] = lineno
        rules.append(PolicyRule(uid, service, namespace))
    return PolicySet(rules=frozenset(rules))


def serialize_policy(policy: PolicySet) -> str:
    """Canonical form: one rule per line, sorted by (uid, service_name)."""
    ordered = sorted(policy.rules, key=lambda r: (r.uid, r.service_name))
    return "".join(f"{r.uid} {r.service_name} {r.namespace}\n" for r in ordered)


def apply_update(
    policy: PolicySet,
    update: PolicyUpdate,
    groups: Mapping[str, ContainerGroup] | None = None,
) -> PolicySet:
    """Produce a new set with the update applied and version bumped by one.

    AssignGroup clears the uid and installs every group binding in the same
    step, so no intermediate state is ever observable.
    """
    rules = set(policy.rules)
    if isinstance(update, SetRule):
        rules = {r for r in rules if (r.uid, r.service_name) != (update.rule.uid, update.rule.service_name)}
        rules.add(update.rule)
    elif isinstance(update, RemoveRule):
        rules = {r for r in rules if (r.uid, r.service_name) != (update.uid, update.service_name)}
    elif isinstance(update, ClearUid):
        rules = {r for r in rules if r.uid != update.uid}
    elif isinstance(update, AssignGroup):
        group = (groups or {}).get(update.group_name)
        if group is None:
            raise NoSuchGroup(f"no container group named {update.group_name!r}")
        rules = {r for r in rules if r.uid != update.uid}
        for service, namespace in group.bindings:
            rules.add(PolicyRule(update.uid, service, namespace))
    else:
        raise TypeError(f"unknown policy update {update!r}")
    return PolicySet(rules=frozenset(rules), version=policy.version + 1)


def validate(
    policy: PolicySet,
    registry_snapshot: Iterable[tuple[str, int]],
    groups: Iterable[ContainerGroup] = (),
) -> list[str]:
    """Warn about rules and group bindings that target no registered
    (service, namespace) instance. Empty list means clean."""
    registered = set(registry_snapshot)
    names = {name for name, _ in registered}
    diagnostics: list[str] = []
    for rule in sorted(policy.rules, key=lambda r: (r.uid, r.service_name)):
        if (rule.service_name, rule.namespace) in registered:
            continue
        if rule.service_name not in names:
            diagnostics.append(
                f"rule ({rule.uid} {rule.service_name} {rule.namespace}): "
                f"unknown service {rule.service_name!r}"
            )
        else:
            diagnostics.append(
                f"rule ({rule.uid} {rule.service_name} {rule.namespace}): "
                f"service {rule.service_name!r} has no namespace {rule.namespace}"
            )
    for group in sorted(groups, key=lambda g: g.group_name):
        for service, namespace in sorted(group.bindings):
            if (service, namespace) not in registered:
                diagnostics.append(
                    f"group {group.group_name!r} binding ({service} {namespace}): "
                    "no registered instance"
                )
    return diagnostics


def parse_groups(text: str) -> dict[str, ContainerGroup]:
    """Parse ``group_name service namespace`` lines into container groups."""
    bindings: dict[str, set[tuple[str, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or not parts[2].isdigit():
            raise PolicyParseError(lineno, f"malformed group line {line!r}")
        name, service, namespace = parts[0], parts[1], int(parts[2])
        entry = bindings.setdefault(name, set())
        if any(svc == service for svc, _ in entry):
            raise DuplicateRuleError(lineno, f"group {name!r} binds service {service!r} twice")
        entry.add((service, namespace))
    return {
        name: ContainerGroup(group_name=name, bindings=frozenset(binds))
        for name, binds in bindings.items()
    }


class PolicyStore:
    """Holds the live policy snapshot. Updates funnel through ``apply`` one
    at a time; readers grab the current immutable set without locking.
    Every applied update is persisted with write-temp-then-rename when a
    backing path is configured."""

    def __init__(
        self,
        initial: PolicySet | None = None,
        path: str | Path | None = None,
        groups: Mapping[str, ContainerGroup] | None = None,
    ):
        self._lock = threading.Lock()
        self._current = initial if initial is not None else PolicySet()
        self._path = Path(path) if path is not None else None
        self._groups = dict(groups or {})
        self._listeners: list[Callable[[PolicySet], None]] = []

    @property
    def current(self) -> PolicySet:
        return self._current

    @property
    def groups(self) -> dict[str, ContainerGroup]:
        return dict(self._groups)

    def subscribe(self, listener: Callable[[PolicySet], None]) -> None:
        self._listeners.append(listener)

    def apply(self, update: PolicyUpdate) -> PolicySet:
        with self._lock:
            new = apply_update(self._current, update, self._groups)
            self._current = new
            if self._path is not None:
                self._persist(new)
        for listener in list(self._listeners):
            listener(new)
        return new

    def _persist(self, policy: PolicySet) -> None:
        text = serialize_policy(policy)
        fd, tmp = tempfile.mkstemp(dir=str(self._path.parent), prefix=".nspolicy-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(text)
            os.replace(tmp, self._path)
        except OSError:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    @classmethod
    def load(
        cls,
        path: str | Path,
        groups: Mapping[str, ContainerGroup] | None = None,
    ) -> "PolicyStore":
        text = Path(path).read_text(encoding="utf-8")
        return cls(initial=parse_policy(text), path=path, groups=groups)
