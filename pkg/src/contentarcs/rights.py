"""ODRL-subset policies, signed license tokens and AI opt-in/out signals.

The policy grammar is a JSON-shaped subset of ODRL 2.2 (see docs/formats.md).
Evaluation is deny-overrides. Site-level signals (robots.txt, TDMRep) and
unit-level signals (IPTC data-mining flag, manifest training/mining
assertion) are folded by :func:`reconcile`, which never turns silence into
consent.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

from .identity import (
    KeyPair,
    Signature,
    actor_id,
    canonical_bytes,
    hexdigest,
    is_actor_id,
    parse_canonical,
    public_key_from_hex,
    sign,
    verify,
)
from .provenance import TRAINING_CATEGORIES

ODRL_CONTEXT = "http://www.w3.org/ns/odrl.jsonld"
ACTIONS = ("use", "reproduce", "data_mining", "ai_training", "ai_generative_training", "ai_inference")
OPERATORS = ("lt", "lteq", "gt", "gteq", "eq")
LEFT_OPERANDS = ("datetime", "count")
WILDCARD = "*"

PERMIT, DENY, NOT_APPLICABLE = "permit", "deny", "not_applicable"
ALLOWED, NOT_ALLOWED, UNSTATED = "allowed", "not_allowed", "unstated"
SOURCES = ("manifest_assertion", "unit_flag", "tdmrep", "robots")  # highest precedence first


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    left: str
    operator: str
    right: int

    def satisfied(self, time: int, prior_use_count: int) -> bool:
        # a count constraint is checked against the use being requested now
        value = time if self.left == "datetime" else prior_use_count + 1
        return {
            "lt": value < self.right,
            "lteq": value <= self.right,
            "gt": value > self.right,
            "gteq": value >= self.right,
            "eq": value == self.right,
        }[self.operator]

    def to_document(self) -> dict:
        return {"leftOperand": self.left, "operator": self.operator, "rightOperand": self.right}


@dataclass(frozen=True)
class Duty:
    amount: int
    beneficiary: str
    action: str = "compensate"

    def to_document(self) -> dict:
        return {"action": self.action, "amount": self.amount, "beneficiary": self.beneficiary}


@dataclass(frozen=True)
class Rule:
    action: str
    target: str
    assigner: str
    assignee: str = WILDCARD
    constraints: tuple[Constraint, ...] = ()
    duties: tuple[Duty, ...] = ()

    def applies_to(self, actor: str, action: str, target: str) -> bool:
        # "use" is the ODRL parent action and covers every other action
        return (
            (self.action == action or self.action == "use")
            and self.target == target
            and self.assignee in (WILDCARD, actor)
        )

    def to_document(self) -> dict:
        doc: dict[str, Any] = {
            "action": self.action,
            "target": self.target,
            "assigner": self.assigner,
            "assignee": self.assignee,
        }
        if self.constraints:
            doc["constraint"] = [c.to_document() for c in self.constraints]
        if self.duties:
            doc["duty"] = [d.to_document() for d in self.duties]
        return doc


@dataclass(frozen=True)
class Policy:
    uid: str
    permissions: tuple[Rule, ...] = ()
    prohibitions: tuple[Rule, ...] = ()

    def __post_init__(self) -> None:
        if not self.uid:
            raise PolicyError("policy uid must be non-empty")
        if not self.permissions and not self.prohibitions:
            raise PolicyError("policy has no rules")
        if any(r.duties for r in self.prohibitions):
            raise PolicyError("prohibitions cannot carry duties")

    def to_document(self) -> dict:
        doc: dict[str, Any] = {"@context": ODRL_CONTEXT, "@type": "Agreement", "uid": self.uid}
        if self.permissions:
            doc["permission"] = [r.to_document() for r in self.permissions]
        if self.prohibitions:
            doc["prohibition"] = [r.to_document() for r in self.prohibitions]
        return doc

    def targets(self) -> set[str]:
        return {r.target for r in (*self.permissions, *self.prohibitions)}


def _strict_int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise PolicyError(f"{what} must be an integer")
    return value


def _only(doc: Any, allowed: set[str], required: set[str], what: str) -> dict:
    if not isinstance(doc, dict):
        raise PolicyError(f"{what} must be a map")
    unknown = set(doc) - allowed
    if unknown:
        raise PolicyError(f"unknown field(s) in {what}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise PolicyError(f"missing field(s) in {what}: {sorted(missing)}")
    return doc


def _parse_constraint(doc: Any) -> Constraint:
    keys = {"leftOperand", "operator", "rightOperand"}
    _only(doc, keys, keys, "constraint")
    if doc["leftOperand"] not in LEFT_OPERANDS:
        raise PolicyError(f"malformed constraint: left operand {doc['leftOperand']!r}")
    if doc["operator"] not in OPERATORS:
        raise PolicyError(f"malformed constraint: operator {doc['operator']!r}")
    right = _strict_int(doc["rightOperand"], "constraint rightOperand")
    if right < 0:
        raise PolicyError("malformed constraint: negative right operand")
    return Constraint(doc["leftOperand"], doc["operator"], right)


def _parse_duty(doc: Any) -> Duty:
    keys = {"action", "amount", "beneficiary"}
    _only(doc, keys, keys, "duty")
    if doc["action"] != "compensate":
        raise PolicyError(f"unknown duty action {doc['action']!r}")
    amount = _strict_int(doc["amount"], "duty amount")
    if amount < 0:
        raise PolicyError("duty amount must be non-negative")
    if not is_actor_id(doc["beneficiary"]):
        raise PolicyError("duty beneficiary must be an actor id")
    return Duty(amount, doc["beneficiary"])


def _parse_rule(doc: Any, kind: str) -> Rule:
    allowed = {"action", "target", "assigner", "assignee", "constraint"}
    if kind == "permission":
        allowed.add("duty")
    _only(doc, allowed, {"action", "target", "assigner"}, kind)
    if doc["action"] not in ACTIONS:
        raise PolicyError(f"unknown action {doc['action']!r}")
    if not isinstance(doc["target"], str) or not doc["target"]:
        raise PolicyError("rule target must be a non-empty string")
    if not is_actor_id(doc["assigner"]):
        raise PolicyError("rule assigner must be an actor id")
    assignee = doc.get("assignee", WILDCARD)
    if assignee != WILDCARD and not is_actor_id(assignee):
        raise PolicyError("rule assignee must be an actor id or '*'")
    constraints = doc.get("constraint", [])
    duties = doc.get("duty", [])
    if not isinstance(constraints, list) or not isinstance(duties, list):
        raise PolicyError("constraint and duty must be lists")
    return Rule(
        action=doc["action"],
        target=doc["target"],
        assigner=doc["assigner"],
        assignee=assignee,
        constraints=tuple(_parse_constraint(c) for c in constraints),
        duties=tuple(_parse_duty(d) for d in duties),
    )


def parse_policy(document: str | bytes | dict) -> Policy:
    if isinstance(document, (str, bytes)):
        try:
            document = parse_canonical(document)
        except (ValueError, TypeError) as exc:
            raise PolicyError(f"policy is not a valid document: {exc}") from exc
    doc = _only(
        document,
        {"@context", "@type", "uid", "permission", "prohibition"},
        {"@context", "@type", "uid"},
        "policy",
    )
    if doc["@context"] != ODRL_CONTEXT:
        raise PolicyError(f"@context must be {ODRL_CONTEXT}")
    if doc["@type"] != "Agreement":
        raise PolicyError("@type must be Agreement")
    if not isinstance(doc["uid"], str) or not doc["uid"]:
        raise PolicyError("policy uid must be a non-empty string")
    perms = doc.get("permission", [])
    prohibs = doc.get("prohibition", [])
    if not isinstance(perms, list) or not isinstance(prohibs, list):
        raise PolicyError("permission and prohibition must be lists")
    if not perms and not prohibs:
        raise PolicyError("policy has an empty rule set")
    return Policy(
        uid=doc["uid"],
        permissions=tuple(_parse_rule(r, "permission") for r in perms),
        prohibitions=tuple(_parse_rule(r, "prohibition") for r in prohibs),
    )


def serialize_policy(policy: Policy) -> bytes:
    return canonical_bytes(policy.to_document())


@dataclass(frozen=True)
class Request:
    actor: str
    action: str
    target: str
    time: int = 0
    prior_use_count: int = 0


@dataclass
class Decision:
    outcome: str
    matched: list[str] = field(default_factory=list)
    duties: list[Duty] = field(default_factory=list)


def evaluate(policies: Iterable[Policy], request: Request) -> Decision:
    """Deny-overrides evaluation.

    Any applicable prohibition whose constraints hold gives deny (all such
    rule ids are reported). Otherwise the first permission in (uid, index)
    order whose constraints hold gives permit with its duties.
    """
    ordered = sorted(policies, key=lambda p: p.uid)

    def live(rule: Rule) -> bool:
        return rule.applies_to(request.actor, request.action, request.target) and all(
            c.satisfied(request.time, request.prior_use_count) for c in rule.constraints
        )

    denied = [
        f"{p.uid}#prohibition/{i}"
        for p in ordered
        for i, rule in enumerate(p.prohibitions)
        if live(rule)
    ]
    if denied:
        return Decision(DENY, denied)
    for p in ordered:
        for i, rule in enumerate(p.permissions):
            if live(rule):
                return Decision(PERMIT, [f"{p.uid}#permission/{i}"], list(rule.duties))
    return Decision(NOT_APPLICABLE)


# -- license tokens ------------------------------------------------------------


@dataclass(frozen=True)
class LicenseToken:
    token_id: str
    policy: Policy
    issuer: str
    issuer_key: str
    holder: str
    issued_at: int
    signature: Signature
    status: str = "active"

    def body(self) -> dict:
        """The signed part: everything except status and signature."""
        return {
            "issued_at": self.issued_at,
            "issuer": self.issuer,
            "issuer_key": self.issuer_key,
            "holder": self.holder,
            "policy": self.policy.to_document(),
        }

    def to_document(self) -> dict:
        doc = self.body()
        doc.update(token_id=self.token_id, signature=self.signature.hex())
        return doc

    def verify(self) -> bool:
        try:
            key = public_key_from_hex(self.issuer_key)
        except ValueError:
            return False
        return (
            actor_id(key) == self.issuer
            and self.token_id == _token_id(self.body())
            and verify(canonical_bytes(self.body()), self.signature, key)
        )

    @classmethod
    def from_document(cls, doc: dict) -> "LicenseToken":
        keys = {"issued_at", "issuer", "issuer_key", "holder", "policy", "token_id", "signature"}
        _only(doc, keys, keys, "license token")
        try:
            sig = bytes.fromhex(doc["signature"])
        except (TypeError, ValueError) as exc:
            raise PolicyError("token signature must be hex") from exc
        return cls(
            token_id=doc["token_id"],
            policy=parse_policy(doc["policy"]),
            issuer=doc["issuer"],
            issuer_key=doc["issuer_key"],
            holder=doc["holder"],
            issued_at=_strict_int(doc["issued_at"], "issued_at"),
            signature=Signature(sig, doc["issuer"]),
        )


def _token_id(body: dict) -> str:
    return "urn:arc:license:" + hexdigest(canonical_bytes(body))[:32]


def issue_license(policy: Policy, issuer: KeyPair, holder: str, time: int) -> LicenseToken:
    body = {
        "issued_at": time,
        "issuer": issuer.actor,
        "issuer_key": issuer.public_key.hex(),
        "holder": holder,
        "policy": policy.to_document(),
    }
    return LicenseToken(
        token_id=_token_id(body),
        policy=policy,
        issuer=issuer.actor,
        issuer_key=issuer.public_key.hex(),
        holder=holder,
        issued_at=time,
        signature=sign(canonical_bytes(body), issuer),
    )


@dataclass(frozen=True)
class RevocationRecord:
    token_id: str
    time: int
    issuer: str
    issuer_key: str
    signature: Signature

    def body(self) -> dict:
        return {
            "issuer": self.issuer,
            "issuer_key": self.issuer_key,
            "time": self.time,
            "token_id": self.token_id,
        }

    def to_document(self) -> dict:
        return dict(self.body(), signature=self.signature.hex())

    def verify(self) -> bool:
        try:
            key = public_key_from_hex(self.issuer_key)
        except ValueError:
            return False
        return actor_id(key) == self.issuer and verify(canonical_bytes(self.body()), self.signature, key)

    @classmethod
    def from_document(cls, doc: dict) -> "RevocationRecord":
        keys = {"issuer", "issuer_key", "time", "token_id", "signature"}
        _only(doc, keys, keys, "revocation")
        try:
            sig = bytes.fromhex(doc["signature"])
        except (TypeError, ValueError) as exc:
            raise PolicyError("revocation signature must be hex") from exc
        return cls(doc["token_id"], _strict_int(doc["time"], "time"), doc["issuer"], doc["issuer_key"],
                   Signature(sig, doc["issuer"]))


def revoke_license(token_id: str, issuer: KeyPair, time: int) -> RevocationRecord:
    body = {"issuer": issuer.actor, "issuer_key": issuer.public_key.hex(), "time": time, "token_id": token_id}
    return RevocationRecord(token_id, time, issuer.actor, issuer.public_key.hex(),
                            sign(canonical_bytes(body), issuer))


# -- opt-in/out signals --------------------------------------------------------


@dataclass(frozen=True)
class OptSignal:
    """One opt-in/out statement. ``category`` None means all four categories."""

    source: str
    scope: str
    category: str | None
    decision: str
    metadata: tuple[tuple[str, str], ...] = ()

    def covers(self, category: str) -> bool:
        return self.category is None or self.category == category


@dataclass(frozen=True)
class RobotsRule:
    allow: bool
    pattern: str

    def matches(self, path: str) -> bool:
        return _robots_match(self.pattern, path)


@dataclass
class RobotsResult:
    """Rules of the user-agent group chosen for one crawler name."""

    agent: str
    group_found: bool
    rules: list[RobotsRule] = field(default_factory=list)

    def decision(self, path: str = "/") -> str:
        if not self.group_found:
            return UNSTATED
        best: RobotsRule | None = None
        for rule in self.rules:
            if not rule.matches(path):
                continue
            if best is None or len(rule.pattern) > len(best.pattern) or (
                len(rule.pattern) == len(best.pattern) and rule.allow and not best.allow
            ):
                best = rule
        if best is None or best.allow:
            return ALLOWED
        return NOT_ALLOWED

    def signal(self, path: str = "/") -> OptSignal:
        return OptSignal("robots", "site", None, self.decision(path), (("path", path),))

    def signals(self) -> list[tuple[str, OptSignal]]:
        """Decision for every path prefix named in the chosen group (plus '/')."""
        prefixes = sorted({"/", *(r.pattern.rstrip("$").split("*")[0] or "/" for r in self.rules)})
        return [(p, self.signal(p)) for p in prefixes]


def _robots_match(pattern: str, path: str) -> bool:
    anchored = pattern.endswith("$")
    body = pattern[:-1] if anchored else pattern
    regex = "".join(".*" if ch == "*" else re.escape(ch) for ch in body)
    return re.match(regex + ("$" if anchored else ""), path) is not None


_ROBOTS_LINE = re.compile(r"^\s*([A-Za-z-]+)\s*:\s*(.*?)\s*$")


def parse_robots(text: str, agent: str) -> RobotsResult:
    """Pick the group for ``agent`` the way RFC 9309 crawlers do.

    Groups naming the agent's product token (case-insensitive) win over '*';
    all matching groups are merged. Unparseable lines are skipped.
    """
    groups: list[tuple[list[str], list[RobotsRule]]] = []
    agents: list[str] = []
    rules: list[RobotsRule] = []
    in_rules = False
    for raw in text.splitlines():
        line = raw.split("#", 1)[0]
        m = _ROBOTS_LINE.match(line)
        if not m:
            continue
        name, value = m.group(1).lower(), m.group(2)
        if name == "user-agent":
            if in_rules:
                groups.append((agents, rules))
                agents, rules, in_rules = [], [], False
            agents.append(value.lower())
        elif name in ("allow", "disallow") and agents:
            in_rules = True
            if not value:
                # empty pattern matches nothing
                continue
            rules.append(RobotsRule(name == "allow", value))
    if agents:
        groups.append((agents, rules))

    token = agent.lower()
    chosen = [r for names, rs in groups if token in names for r in rs]
    found = any(token in names for names, _ in groups)
    if not found:
        chosen = [r for names, rs in groups if "*" in names for r in rs]
        found = any("*" in names for names, _ in groups)
    return RobotsResult(agent=agent, group_found=found, rules=chosen)


def parse_tdmrep(document: str | bytes | dict | list, path: str = "/") -> tuple[OptSignal, list[str]]:
    """Read a ``/.well-known/tdmrep.json`` document.

    Accepts either a single object or the W3C array of location rules; for
    the array form the first rule whose location matches ``path`` is used.
    A reservation applies to every category. Returns the signal and a list
    of warnings.
    """
    warnings: list[str] = []
    if isinstance(document, (str, bytes)):
        try:
            document = parse_canonical(document)
        except (ValueError, TypeError) as exc:
            return OptSignal("tdmrep", "site", None, UNSTATED), [f"malformed tdmrep: {exc}"]
    entry: Any = document
    if isinstance(document, list):
        entry = None
        for item in document:
            if isinstance(item, dict) and fnmatch.fnmatchcase(path, str(item.get("location", "/*"))):
                entry = item
                break
        if entry is None:
            return OptSignal("tdmrep", "site", None, UNSTATED), warnings
    if not isinstance(entry, dict):
        return OptSignal("tdmrep", "site", None, UNSTATED), ["malformed tdmrep: expected an object"]
    meta = ()
    if isinstance(entry.get("tdm-policy"), str):
        meta = (("tdm-policy", entry["tdm-policy"]),)
    value = entry.get("tdm-reservation")
    if value is None:
        return OptSignal("tdmrep", "site", None, UNSTATED, meta), warnings
    if value is True or value == 1:
        return OptSignal("tdmrep", "site", None, NOT_ALLOWED, meta), warnings
    if value is False or value == 0:
        return OptSignal("tdmrep", "site", None, ALLOWED, meta), warnings
    warnings.append(f"malformed tdmrep: tdm-reservation={value!r}")
    return OptSignal("tdmrep", "site", None, UNSTATED, meta), warnings


# IPTC / PLUS "Data Mining" vocabulary
_PLUS = "http://ns.useplus.org/ldf/vocab/"
_UNIT_FLAGS = {
    "DMI-UNSPECIFIED": (None, UNSTATED),
    "DMI-ALLOWED": (None, ALLOWED),
    "DMI-PROHIBITED": (None, NOT_ALLOWED),
    "DMI-PROHIBITED-AIMLTRAINING": ("ai_training", NOT_ALLOWED),
    "DMI-PROHIBITED-GENAIMLTRAINING": ("ai_generative_training", NOT_ALLOWED),
    "DMI-PROHIBITED-EXCEPTSEARCHENGINEINDEXING": (None, NOT_ALLOWED),
    "DMI-PROHIBITED-SEECONSTRAINT": (None, NOT_ALLOWED),
    "DMI-PROHIBITED-SEEEMBEDDEDRIGHTSEXPR": (None, NOT_ALLOWED),
    "DMI-PROHIBITED-SEELINKEDRIGHTSEXPR": (None, NOT_ALLOWED),
}


def unit_flag_signal(value: str | None) -> OptSignal:
    if not value:
        return OptSignal("unit_flag", "asset", None, UNSTATED)
    code = value[len(_PLUS):] if value.startswith(_PLUS) else value
    category, decision = _UNIT_FLAGS.get(code.upper(), (None, UNSTATED))
    return OptSignal("unit_flag", "asset", category, decision, (("flag", value),))


def manifest_signals(entries: dict[str, str] | None) -> list[OptSignal]:
    """Signals from a training/mining assertion; 'constrained' is not blanket consent."""
    if entries is None:
        return [OptSignal("manifest_assertion", "asset", None, UNSTATED)]
    mapping = {"allowed": ALLOWED, "not_allowed": NOT_ALLOWED, "constrained": NOT_ALLOWED}
    return [
        OptSignal("manifest_assertion", "asset", cat, mapping[entries[cat]], (("value", entries[cat]),))
        for cat in TRAINING_CATEGORIES
    ]


@dataclass
class Reconciled:
    decision: str
    explanation: list[str]


def reconcile(signals: Iterable[OptSignal], category: str) -> Reconciled:
    """Effective opt decision for one category.

    The most specific source that says anything wins:
    manifest_assertion > unit_flag > tdmrep > robots. Within one source a
    refusal beats a grant. If nothing is stated the answer is unstated.
    """
    relevant = [s for s in signals if s.covers(category)]
    explanation = []
    for source in SOURCES:
        stated = sorted({s.decision for s in relevant if s.source == source} - {UNSTATED})
        if not stated:
            explanation.append(f"{source}: unstated")
            continue
        decision = NOT_ALLOWED if NOT_ALLOWED in stated else ALLOWED
        explanation.append(f"{source}: {decision} (decides)")
        return Reconciled(decision, explanation)
    return Reconciled(UNSTATED, explanation)
