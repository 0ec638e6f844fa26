import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from contentarcs.compensation import (
    Accounts,
    AttributionResult,
    CompensationError,
    InsufficientFunds,
    PaymentEvent,
    SettlementRefused,
    attribute_by_similarity,
    distribute,
    generation_royalty,
    settle_event,
    shapley_attribution,
    shapley_exact,
)
from contentarcs.content_id import Fingerprint, FingerprintIndex
from contentarcs.provenance import create_manifest, soft_binding
from contentarcs.registry import NodeState, issue_payload, registration_payload, revoke_payload
from contentarcs.rights import Duty, Policy, Request, Rule, issue_license, revoke_license

from conftest import seeded_key

FP = "phash64:0f0f0f0f0f0f0f0f"


def licensed_view(owner, holder, duty):
    node = NodeState(seeded_key(200))
    manifest = create_manifest(b"work", [soft_binding(FP)], owner, "test/1", 0)
    node.append("manifest_registration", registration_payload(manifest), owner, 0)
    duties = (Duty(duty, owner.actor),) if duty is not None else ()
    rule = Rule("ai_training", manifest.manifest_id, owner.actor, holder.actor, duties=duties)
    token = issue_license(Policy("urn:policy:c", permissions=(rule,)), owner, holder.actor, 1)
    node.append("license_issue", issue_payload(token), owner, 1)
    request = Request(holder.actor, "ai_training", manifest.manifest_id, 2)
    return node, token, request


# -- settlement --

def test_settle_no_duty_moves_nothing(alice, bob):
    node, token, req = licensed_view(alice, bob, None)
    accounts = Accounts({bob.actor: 10})
    assert settle_event(node.view(), token.token_id, req, accounts) == []
    assert accounts.balances == {bob.actor: 10}


def test_settle_zero_duty_emits_no_event(alice, bob):
    node, token, req = licensed_view(alice, bob, 0)
    accounts = Accounts({bob.actor: 10})
    assert settle_event(node.view(), token.token_id, req, accounts) == []


def test_settle_exact_balance(alice, bob):
    node, token, req = licensed_view(alice, bob, 100)
    accounts = Accounts({bob.actor: 100})
    hooked = []
    events = settle_event(node.view(), token.token_id, req, accounts, hooked.append)
    assert events == [PaymentEvent(bob.actor, alice.actor, 100, "license_duty", token.token_id)]
    assert hooked == events
    assert accounts.balance(bob.actor) == 0 and accounts.balance(alice.actor) == 100


def test_settle_insufficient_funds_leaves_balances(alice, bob):
    node, token, req = licensed_view(alice, bob, 100)
    accounts = Accounts({bob.actor: 99})
    hooked = []
    with pytest.raises(InsufficientFunds):
        settle_event(node.view(), token.token_id, req, accounts, hooked.append)
    assert accounts.balances == {bob.actor: 99} and hooked == []


def test_settle_revoked_token_refused(alice, bob):
    node, token, req = licensed_view(alice, bob, 5)
    node.append("license_revoke", revoke_payload(revoke_license(token.token_id, alice, 3)), alice, 3)
    accounts = Accounts({bob.actor: 50})
    with pytest.raises(SettlementRefused):
        settle_event(node.view(), token.token_id, req, accounts)
    assert accounts.balance(bob.actor) == 50


def test_settle_wrong_holder_or_action_refused(alice, bob, carol):
    node, token, req = licensed_view(alice, bob, 5)
    accounts = Accounts({bob.actor: 50, carol.actor: 50})
    with pytest.raises(SettlementRefused):
        settle_event(node.view(), token.token_id, Request(carol.actor, req.action, req.target), accounts)
    with pytest.raises(SettlementRefused):
        settle_event(node.view(), token.token_id, Request(bob.actor, "reproduce", req.target), accounts)
    with pytest.raises(SettlementRefused):
        settle_event(node.view(), "urn:arc:license:nope", req, accounts)


def test_accounts_apply_is_atomic(alice, bob):
    accounts = Accounts({alice.actor: 5})
    events = [PaymentEvent(alice.actor, bob.actor, 5, "license_duty", "r"),
              PaymentEvent(alice.actor, bob.actor, 1, "license_duty", "r")]
    with pytest.raises(InsufficientFunds):
        accounts.apply(events)
    assert accounts.balances == {alice.actor: 5}


def test_accounts_document_round_trip(alice, bob):
    accounts = Accounts({bob.actor: 3, alice.actor: 7})
    assert Accounts.from_document(accounts.to_document()) == accounts
    with pytest.raises(ValueError):
        Accounts.from_document({"balances": {alice.actor: -1}})


# -- attribution --

def index_of(pairs):
    index = FingerprintIndex("phash64")
    for key, value in pairs:
        index.insert(Fingerprint.from_int("phash64", value), key)
    return index


def test_attribution_k1_single_owner():
    index = index_of([("a", 0), ("b", 0xFF)])
    result = attribute_by_similarity(Fingerprint.from_int("phash64", 1), index, 1)
    assert result.weights == {"a": Fraction(1)}


def test_attribution_equal_distance_splits_evenly():
    index = index_of([("a", 0b01), ("b", 0b10)])
    result = attribute_by_similarity(Fingerprint.from_int("phash64", 0), index, 2)
    assert result.weights == {"a": Fraction(1, 2), "b": Fraction(1, 2)}


def test_attribution_distances_0_and_32():
    index = index_of([("a", 0), ("b", (1 << 32) - 1)])
    result = attribute_by_similarity(Fingerprint.from_int("phash64", 0), index, 2)
    assert result.weights == {"a": Fraction(2, 3), "b": Fraction(1, 3)}


def test_attribution_sums_owner_weights():
    index = index_of([("k1", 0), ("k2", 0), ("k3", (1 << 64) - 1)])
    result = attribute_by_similarity(Fingerprint.from_int("phash64", 0), index, 3,
                                     owners={"k1": "x", "k2": "x", "k3": "y"})
    assert result.weights == {"x": Fraction(1), "y": Fraction(0)}


def test_attribution_empty_index():
    with pytest.raises(CompensationError):
        attribute_by_similarity(Fingerprint.from_int("phash64", 0), FingerprintIndex("phash64"), 1)


def test_attribution_result_must_sum_to_one():
    with pytest.raises(ValueError):
        AttributionResult({"a": Fraction(1, 2)})


# -- Shapley --

def test_shapley_symmetric_pair():
    phi = shapley_exact(["a", "b"], lambda s: 2 if len(s) == 2 else (1 if s else 0))
    assert phi == {"a": 1, "b": 1}


def test_shapley_asymmetric_pair():
    table = {frozenset(): 0, frozenset("a"): 1, frozenset("b"): 0, frozenset("ab"): 2}
    assert shapley_exact(["a", "b"], table.__getitem__) == {"a": Fraction(3, 2), "b": Fraction(1, 2)}


def test_shapley_dummy_player_gets_zero():
    phi = shapley_exact(["a", "b", "d"], lambda s: len(s - {"d"}) ** 2)
    assert phi["d"] == 0


def brute_force_shapley(players, v):
    """Average marginal contribution over all n! arrival orders."""
    totals = {p: Fraction(0) for p in players}
    orders = list(itertools.permutations(players))
    for order in orders:
        seen = frozenset()
        for p in order:
            totals[p] += Fraction(v(seen | {p})) - Fraction(v(seen))
            seen = seen | {p}
    return {p: t / len(orders) for p, t in totals.items()}


@st.composite
def games(draw):
    n = draw(st.integers(1, 6))
    players = [f"p{i}" for i in range(n)]
    values = draw(st.lists(st.integers(-50, 100), min_size=2**n, max_size=2**n))
    values[0] = 0

    def v(coalition):
        return values[sum(1 << int(p[1:]) for p in coalition)]

    return players, v


@given(games())
def test_shapley_matches_permutation_oracle(game):
    players, v = game
    assert shapley_exact(players, v) == brute_force_shapley(players, v)


@given(games())
def test_shapley_efficiency(game):
    players, v = game
    assert sum(shapley_exact(players, v).values()) == v(frozenset(players))


def test_shapley_limits():
    with pytest.raises(ValueError):
        shapley_exact([str(i) for i in range(13)], len)
    with pytest.raises(ValueError):
        shapley_exact(["a"], lambda s: 1)


def test_shapley_attribution_drops_nonpositive():
    result = shapley_attribution({"a": Fraction(3), "b": Fraction(-1), "c": Fraction(1)})
    assert result.weights == {"a": Fraction(3, 4), "c": Fraction(1, 4)}


# -- distribution --

def test_distribute_exact_shares():
    w = AttributionResult({"a": Fraction(1, 2), "b": Fraction(3, 10), "c": Fraction(1, 5)})
    assert distribute(1000, w) == {"a": 500, "b": 300, "c": 200}


def test_distribute_thirds_tie_goes_to_smaller_id():
    w = AttributionResult({"c": Fraction(1, 3), "a": Fraction(1, 3), "b": Fraction(1, 3)})
    assert distribute(100, w) == {"a": 34, "b": 33, "c": 33}


def test_distribute_zero_pool():
    w = AttributionResult({"a": Fraction(1, 3), "b": Fraction(2, 3)})
    assert distribute(0, w) == {"a": 0, "b": 0}


@given(st.integers(0, 10**9), st.lists(st.integers(1, 1000), min_size=1, max_size=8))
def test_distribute_conserves_and_stays_within_one_unit(pool, raw):
    total = sum(raw)
    w = AttributionResult({f"o{i}": Fraction(r, total) for i, r in enumerate(raw)})
    payout = distribute(pool, w)
    assert sum(payout.values()) == pool
    for owner, share in w.weights.items():
        assert abs(payout[owner] - pool * share) < 1


# -- generation royalty --

def test_royalty_single_owner(alice, bob):
    accounts = Accounts({bob.actor: 100})
    index = index_of([("k", 0)])
    events = generation_royalty(Fingerprint.from_int("phash64", 0), index, {"k": alice.actor},
                                100, bob.actor, accounts)
    assert [(e.payee, e.amount) for e in events] == [(alice.actor, 100)]
    assert accounts.balance(alice.actor) == 100 and accounts.balance(bob.actor) == 0


def test_royalty_odd_pool_two_owners(alice, bob, carol):
    accounts = Accounts({carol.actor: 101})
    index = index_of([("k1", 0b01), ("k2", 0b10)])
    owners = {"k1": alice.actor, "k2": bob.actor}
    events = generation_royalty(Fingerprint.from_int("phash64", 0), index, owners, 101, carol.actor, accounts, k=2)
    paid = sorted(e.amount for e in events)
    assert paid == [50, 51]
    assert accounts.balance(min(alice.actor, bob.actor)) == 51


def test_royalty_zero_pool(alice, bob):
    accounts = Accounts({bob.actor: 5})
    events = generation_royalty(Fingerprint.from_int("phash64", 0), index_of([("k", 0)]), {"k": alice.actor},
                                0, bob.actor, accounts)
    assert events == [] and accounts.balances == {bob.actor: 5}


def test_royalty_insufficient_funds(alice, bob):
    accounts = Accounts({bob.actor: 5})
    with pytest.raises(InsufficientFunds):
        generation_royalty(Fingerprint.from_int("phash64", 0), index_of([("k", 0)]), {"k": alice.actor},
                           6, bob.actor, accounts)
    assert accounts.balances == {bob.actor: 5}


def random_scenario(rnd: random.Random):
    owners = [seeded_key(300 + i).actor for i in range(rnd.randint(1, 6))]
    payer = seeded_key(299).actor
    pairs = [(f"k{i}", rnd.getrandbits(64)) for i in range(rnd.randint(1, 20))]
    owner_of = {key: rnd.choice(owners) for key, _ in pairs}
    pool = rnd.randint(0, 10**6)
    accounts = Accounts({payer: pool + rnd.randint(0, 10)})
    for o in owners:
        if rnd.random() < 0.5:
            accounts.mint(o, rnd.randint(0, 100))
    probe = Fingerprint.from_int("phash64", rnd.getrandbits(64))
    return probe, index_of(pairs), owner_of, pool, payer, accounts, rnd.randint(1, 8)


def test_royalty_conservation_over_random_scenarios():
    rnd = random.Random(17)
    for _ in range(200):
        probe, index, owners, pool, payer, accounts, k = random_scenario(rnd)
        before = accounts.total()
        payer_before = accounts.balance(payer)
        events = generation_royalty(probe, index, owners, pool, payer, accounts, k=k)
        assert accounts.total() == before
        assert sum(e.amount for e in events) == pool
        assert accounts.balance(payer) == payer_before - pool
        assert all(e.amount > 0 for e in events)


def test_exact_fraction_weights_never_float():
    index = index_of([("a", 0), ("b", 7)])
    weights = attribute_by_similarity(Fingerprint.from_int("phash64", 0), index, 2).weights
    assert all(isinstance(w, Fraction) for w in weights.values())
    assert math.isclose(float(sum(weights.values())), 1.0)
