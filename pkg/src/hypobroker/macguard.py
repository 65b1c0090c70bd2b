"""Mandatory transfer guard: label-based rules deciding whether a held
service handle may be passed from one client to another.

Rules are loaded once at startup and checked for internal consistency;
``neverallow`` rules dominate and no ``allow`` rule may contradict one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError

WILDCARD = "*"


class SecurityLabel(str, Enum):
    SYSTEM = "system"
    TRUSTED_APP = "trusted_app"
    UNTRUSTED_APP = "untrusted_app"

    @classmethod
    def parse(cls, text: str) -> "SecurityLabel":
        try:
            return cls(text)
        except ValueError:
            raise ConfigError(f"unknown security label {text!r}") from None


ALL_LABELS = tuple(SecurityLabel)


class Decision(Enum):
    ALLOW = "allow"
    DENY = "deny"


def _pattern_matches(pattern: str, label: SecurityLabel) -> bool:
    return pattern == WILDCARD or pattern == label.value


def _patterns_intersect(a: str, b: str) -> bool:
    return a == WILDCARD or b == WILDCARD or a == b


@dataclass(frozen=True)
class TransferRule:
    """One ``allow`` or ``neverallow`` line over (sender, receiver, owner)
    label patterns; ``*`` matches any label."""

    kind: str
    sender: str
    receiver: str
    owner: str

    def __post_init__(self) -> None:
        if self.kind not in ("allow", "neverallow"):
            raise ConfigError(f"unknown rule kind {self.kind!r}")
        for field in (self.sender, self.receiver, self.owner):
            if not field:
                raise ConfigError("empty label pattern")
            if field != WILDCARD:
                SecurityLabel.parse(field)

    def matches(self, sender: SecurityLabel, receiver: SecurityLabel, owner: SecurityLabel) -> bool:
        return (
            _pattern_matches(self.sender, sender)
            and _pattern_matches(self.receiver, receiver)
            and _pattern_matches(self.owner, owner)
        )

    def intersects(self, other: "TransferRule") -> bool:
        return (
            _patterns_intersect(self.sender, other.sender)
            and _patterns_intersect(self.receiver, other.receiver)
            and _patterns_intersect(self.owner, other.owner)
        )


def check_transfer(
    sender: SecurityLabel,
    receiver: SecurityLabel,
    owner: SecurityLabel,
    ruleset: list[TransferRule],
) -> Decision:
    """Decide a handle transfer. Any matching neverallow denies; otherwise a
    matching allow permits; otherwise default-deny."""
    for rule in ruleset:
        if rule.kind == "neverallow" and rule.matches(sender, receiver, owner):
            return Decision.DENY
    for rule in ruleset:
        if rule.kind == "allow" and rule.matches(sender, receiver, owner):
            return Decision.ALLOW
    return Decision.DENY


def validate_ruleset(ruleset: list[TransferRule]) -> list[tuple[TransferRule, TransferRule]]:
    """Return every (allow, neverallow) pair whose match sets intersect.

    An empty result means no allow rule can ever contradict a neverallow;
    the broker refuses to start otherwise.
    """
    allows = [r for r in ruleset if r.kind == "allow"]
    nevers = [r for r in ruleset if r.kind == "neverallow"]
    return [(a, n) for a in allows for n in nevers if a.intersects(n)]


def parse_ruleset(text: str) -> list[TransferRule]:
    """Parse ``allow|neverallow <sender> <receiver> <owner>`` lines; blank
    lines and ``#`` comments are ignored."""
    rules: list[TransferRule] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ConfigError(f"transfer rules line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            rules.append(TransferRule(*parts))
        except ConfigError as exc:
            raise ConfigError(f"transfer rules line {lineno}: {exc}") from None
    return rules


def serialize_ruleset(ruleset: list[TransferRule]) -> str:
    return "".join(f"{r.kind} {r.sender} {r.receiver} {r.owner}\n" for r in ruleset)


# Default fabric: everything is transferable except system-owned handles
# passed between untrusted apps. The allow rules jointly cover every label
# triple outside the neverallow's match set, so the pair validates cleanly.
DEFAULT_RULESET: list[TransferRule] = [
    TransferRule("neverallow", "untrusted_app", "untrusted_app", "system"),
    TransferRule("allow", "*", "*", "trusted_app"),
    TransferRule("allow", "*", "*", "untrusted_app"),
    TransferRule("allow", "system", "*", "*"),
    TransferRule("allow", "trusted_app", "*", "*"),
    TransferRule("allow", "*", "system", "*"),
    TransferRule("allow", "*", "trusted_app", "*"),
]
