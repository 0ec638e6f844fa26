"""Stored-value accounts, license duty settlement and attribution royalties.

Money is integer micro-units end to end; weights are exact fractions and
only become integers in :func:`distribute`, which conserves the pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .content_id import Fingerprint, FingerprintIndex
from .identity import is_actor_id
from .registry.view import RegistryView
from .rights import PERMIT, Request, evaluate

MAX_SHAPLEY_PLAYERS = 12


class CompensationError(Exception):
    pass


class InsufficientFunds(CompensationError):
    pass


class SettlementRefused(CompensationError):
    pass


@dataclass(frozen=True)
class PaymentEvent:
    payer: str
    payee: str
    amount: int
    cause: str
    reference: str

    def to_document(self) -> dict:
        return {
            "payer": self.payer,
            "payee": self.payee,
            "amount": self.amount,
            "cause": self.cause,
            "reference": self.reference,
        }


LedgerHook = Callable[[PaymentEvent], object]


@dataclass
class Accounts:
    """Balances by owner. Only ``mint``/``burn`` change the total."""

    balances: dict[str, int] = field(default_factory=dict)

    def balance(self, owner: str) -> int:
        return self.balances.get(owner, 0)

    def total(self) -> int:
        return sum(self.balances.values())

    def mint(self, owner: str, amount: int) -> None:
        if amount < 0:
            raise ValueError("mint amount must be non-negative")
        self.balances[owner] = self.balance(owner) + amount

    def burn(self, owner: str, amount: int) -> None:
        if amount < 0 or amount > self.balance(owner):
            raise InsufficientFunds(f"{owner} cannot burn {amount}")
        self.balances[owner] = self.balance(owner) - amount

    def apply(self, events: Iterable[PaymentEvent]) -> None:
        """All-or-nothing: every transfer is checked on a copy before commit."""
        staged = dict(self.balances)
        for ev in events:
            if ev.amount <= 0:
                raise ValueError("payment amounts must be positive")
            have = staged.get(ev.payer, 0)
            if have < ev.amount:
                raise InsufficientFunds(f"{ev.payer} holds {have}, needs {ev.amount}")
            staged[ev.payer] = have - ev.amount
            staged[ev.payee] = staged.get(ev.payee, 0) + ev.amount
        self.balances = staged

    def to_document(self) -> dict:
        return {"balances": dict(sorted(self.balances.items()))}

    @classmethod
    def from_document(cls, doc: dict) -> "Accounts":
        balances = doc.get("balances", {})
        for owner, value in balances.items():
            if not is_actor_id(owner) or isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ValueError(f"bad account entry {owner!r}: {value!r}")
        return cls(dict(balances))


def settle_event(
    view: RegistryView,
    token_id: str,
    request: Request,
    accounts: Accounts,
    ledger_hook: LedgerHook | None = None,
) -> list[PaymentEvent]:
    """Charge the duties of a license for one exercise of it.

    Raises SettlementRefused when the token is unknown, revoked, held by
    someone else or does not permit the request, and InsufficientFunds
    (with balances untouched) when the holder cannot cover the duties.
    """
    token = view.tokens.get(token_id)
    if token is None:
        raise SettlementRefused(f"unknown license {token_id}")
    if view.license_status(token_id) == "revoked":
        raise SettlementRefused(f"license {token_id} has been revoked")
    if request.actor != token.holder:
        raise SettlementRefused(f"license {token_id} is held by {token.holder}, not {request.actor}")
    decision = evaluate([token.policy], request)
    if decision.outcome != PERMIT:
        raise SettlementRefused(f"license does not permit this use ({decision.outcome})")
    events = [
        PaymentEvent(token.holder, duty.beneficiary, duty.amount, "license_duty", token_id)
        for duty in decision.duties
        if duty.amount > 0
    ]
    accounts.apply(events)
    if ledger_hook is not None:
        for ev in events:
            ledger_hook(ev)
    return events


@dataclass
class AttributionResult:
    weights: dict[str, Fraction]

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("attribution weights must be non-negative")
        if self.weights and sum(self.weights.values()) != 1:
            raise ValueError("attribution weights must sum to exactly 1")


def linear_similarity(distance: int, bits: int) -> Fraction:
    return Fraction(bits - distance, bits)


def attribute_by_similarity(
    synthetic: Fingerprint,
    index: FingerprintIndex,
    k: int,
    owners: Mapping[str, str] | None = None,
    similarity: Callable[[int, int], Fraction] = linear_similarity,
) -> AttributionResult:
    """Split credit over the k training entries nearest to ``synthetic``.

    Entries are ranked by (distance, key); each gets similarity
    (bits - d) / bits and weights are similarities over their sum, summed
    per owner. If every similarity is zero the k entries share equally.
    ``owners`` maps index keys to actor ids; without it the keys are
    taken to be actor ids.
    """
    if len(index) == 0:
        raise CompensationError("training index is empty")
    if k < 1:
        raise ValueError("k must be positive")
    nearest = index.nearest(synthetic, k)
    sims = [similarity(d, synthetic.width) for _, d in nearest]
    total = sum(sims, Fraction(0))
    if total == 0:
        sims = [Fraction(1)] * len(nearest)
        total = Fraction(len(nearest))
    weights: dict[str, Fraction] = {}
    for (key, _), s in zip(nearest, sims):
        owner = owners[key] if owners is not None else key
        weights[owner] = weights.get(owner, Fraction(0)) + s / total
    return AttributionResult(weights)


def shapley_exact(
    contributors: list[str],
    value_fn: Callable[[frozenset], int | Fraction],
) -> dict[str, Fraction]:
    """Exact Shapley values by enumerating all 2^n coalitions (n <= 12)."""
    n = len(contributors)
    if n > MAX_SHAPLEY_PLAYERS:
        raise ValueError(f"exact Shapley is capped at {MAX_SHAPLEY_PLAYERS} contributors, got {n}")
    if len(set(contributors)) != n:
        raise ValueError("contributors must be distinct")

    def v(mask: int) -> Fraction:
        value = value_fn(frozenset(c for i, c in enumerate(contributors) if mask >> i & 1))
        if isinstance(value, float):
            raise TypeError("value function must return an integer or Fraction")
        return Fraction(value)

    values = [v(mask) for mask in range(1 << n)]
    if values[0] != 0:
        raise ValueError("value of the empty coalition must be 0")
    if n == 0:
        return {}
    n_fact = math.factorial(n)
    weight = [Fraction(math.factorial(s) * math.factorial(n - s - 1), n_fact) for s in range(n)]
    phi = {}
    for i, c in enumerate(contributors):
        bit = 1 << i
        phi[c] = sum(
            (weight[bin(mask).count("1")] * (values[mask | bit] - values[mask])
             for mask in range(1 << n) if not mask & bit),
            Fraction(0),
        )
    return phi


def shapley_attribution(phi: Mapping[str, Fraction]) -> AttributionResult:
    """Normalize non-negative Shapley values into payout weights."""
    positive = {k: max(v, Fraction(0)) for k, v in phi.items()}
    total = sum(positive.values(), Fraction(0))
    if total == 0:
        raise CompensationError("no contributor has positive value")
    return AttributionResult({k: v / total for k, v in positive.items() if v > 0})


def distribute(pool: int, attribution: AttributionResult) -> dict[str, int]:
    """Largest-remainder apportionment; leftover units go to the biggest
    fractional parts, ties to the smaller actor id."""
    if pool < 0:
        raise ValueError("pool must be non-negative")
    shares = {owner: pool * w for owner, w in attribution.weights.items()}
    payout = {owner: math.floor(s) for owner, s in shares.items()}
    leftover = pool - sum(payout.values())
    by_remainder = sorted(shares, key=lambda o: (-(shares[o] - payout[o]), o))
    for owner in by_remainder[:leftover]:
        payout[owner] += 1
    return dict(sorted(payout.items()))


def generation_royalty(
    synthetic: Fingerprint,
    index: FingerprintIndex,
    owners: Mapping[str, str] | None,
    pool: int,
    payer: str,
    accounts: Accounts,
    ledger_hook: LedgerHook | None = None,
    k: int = 5,
    reference: str = "",
) -> list[PaymentEvent]:
    if pool > accounts.balance(payer):
        raise InsufficientFunds(f"{payer} holds {accounts.balance(payer)}, pool is {pool}")
    if pool == 0:
        return []
    payout = distribute(pool, attribute_by_similarity(synthetic, index, k, owners))
    reference = reference or synthetic.hex()
    events = [
        PaymentEvent(payer, owner, amount, "attribution_royalty", reference)
        for owner, amount in payout.items()
        if amount > 0
    ]
    accounts.apply(events)
    if ledger_hook is not None:
        for ev in events:
            ledger_hook(ev)
    return events
