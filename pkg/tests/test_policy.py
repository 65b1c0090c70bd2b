"""Policy model tests. The resolution oracle is an independent brute-force
scan over (uid, service, namespace) tuples kept as plain lists."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypobroker.errors import DuplicateRuleError, NoSuchGroup, PolicyParseError
from hypobroker.policy import (
    AssignGroup,
    ClearUid,
    ContainerGroup,
    PolicyRule,
    PolicySet,
    PolicyStore,
    RemoveRule,
    SetRule,
    apply_update,
    lookup_rule,
    parse_groups,
    parse_policy,
    serialize_policy,
    validate,
)


def oracle_lookup(tuples, uid, service):
    for t_uid, t_service, t_namespace in tuples:
        if t_uid == uid and t_service == service:
            return t_namespace
    return 0


def make_set(*tuples):
    return PolicySet(rules=frozenset(PolicyRule(*t) for t in tuples))


# -- lookup -------------------------------------------------------------------


def test_lookup_empty_is_global():
    assert lookup_rule(PolicySet(), 5, "x") == 0


def test_lookup_matches_and_misses():
    policy = make_set((10001, "phone", 1))
    assert lookup_rule(policy, 10001, "phone") == 1
    assert lookup_rule(policy, 10002, "phone") == 0
    assert lookup_rule(policy, 10001, "location") == 0


rule_tuples = st.lists(
    st.tuples(st.integers(0, 30), st.sampled_from(["location", "subinfo", "phone", "sensors", "ime"]),
              st.integers(0, 5)),
    max_size=25,
)


@settings(max_examples=100)
@given(rule_tuples, st.integers(0, 30), st.sampled_from(["location", "subinfo", "phone", "x"]))
def test_lookup_matches_bruteforce_oracle(tuples, uid, service):
    deduped = {}
    for t in tuples:
        deduped.setdefault((t[0], t[1]), t)
    tuples = list(deduped.values())
    policy = make_set(*tuples)
    assert lookup_rule(policy, uid, service) == oracle_lookup(tuples, uid, service)


# -- parse / serialize ----------------------------------------------------------


def test_parse_empty():
    assert parse_policy("") == PolicySet()


def test_parse_rules_and_comments():
    text = "# header\n\n10001 location 1\n  10001 subinfo 1  \n"
    policy = parse_policy(text)
    assert policy == make_set((10001, "location", 1), (10001, "subinfo", 1))


def test_parse_duplicate_is_error_not_last_wins():
    with pytest.raises(DuplicateRuleError) as exc:
        parse_policy("10001 location 1\n10001 location 2\n")
    assert exc.value.line == 2


def test_parse_malformed_line_number():
    with pytest.raises(PolicyParseError) as exc:
        parse_policy("10001 location 1\nnonsense here\n")
    assert exc.value.line == 2


def test_serialize_empty():
    assert serialize_policy(PolicySet()) == ""


def test_serialize_canonical_order():
    policy = make_set((10001, "location", 1), (42, "phone", 1))
    assert serialize_policy(policy) == "42 phone 1\n10001 location 1\n"


@settings(max_examples=100)
@given(rule_tuples)
def test_roundtrip_is_fixpoint(tuples):
    deduped = {}
    for t in tuples:
        deduped.setdefault((t[0], t[1]), t)
    policy = make_set(*deduped.values())
    assert parse_policy(serialize_policy(policy)) == policy
    text = serialize_policy(policy)
    assert serialize_policy(parse_policy(text)) == text


# -- updates --------------------------------------------------------------------

GROUPS = {
    "Untrusted": ContainerGroup(
        "Untrusted", frozenset({("location", 2), ("subinfo", 1), ("phone", 1)})
    )
}


def test_set_rule_adds_and_replaces():
    policy = apply_update(PolicySet(), SetRule(PolicyRule(10001, "location", 1)))
    assert policy.version == 1
    assert lookup_rule(policy, 10001, "location") == 1
    policy = apply_update(policy, SetRule(PolicyRule(10001, "location", 2)))
    assert policy.version == 2
    assert lookup_rule(policy, 10001, "location") == 2
    assert len(policy.rules) == 1


def test_remove_rule_is_idempotent_but_versions():
    policy = make_set((10001, "location", 1))
    removed = apply_update(policy, RemoveRule(10001, "location"))
    assert removed.rules == frozenset()
    again = apply_update(removed, RemoveRule(10001, "location"))
    assert again.rules == frozenset()
    assert again.version == removed.version + 1


def test_assign_group_expands_exactly():
    base = make_set((10001, "sensors", 2), (77, "phone", 1))
    updated = apply_update(base, AssignGroup(10001, "Untrusted"), GROUPS)
    mine = {(r.service_name, r.namespace) for r in updated.rules if r.uid == 10001}
    # oracle: expand the group by hand and compare
    assert mine == {("location", 2), ("subinfo", 1), ("phone", 1)}
    assert {r for r in updated.rules if r.uid == 77} == {PolicyRule(77, "phone", 1)}
    assert updated.version == base.version + 1


def test_assign_unknown_group():
    with pytest.raises(NoSuchGroup):
        apply_update(PolicySet(), AssignGroup(10001, "Nope"), GROUPS)


def test_clear_uid():
    base = make_set((10001, "location", 1), (10001, "phone", 1), (42, "phone", 1))
    cleared = apply_update(base, ClearUid(10001))
    assert cleared == make_set((42, "phone", 1))


def test_duplicate_keys_rejected_by_type():
    with pytest.raises(ValueError):
        PolicySet(rules=frozenset({PolicyRule(1, "a", 1), PolicyRule(1, "a", 2)}))


# -- validate ---------------------------------------------------------------------

REGISTRY = [("location", 0), ("location", 1), ("location", 2), ("phone", 0)]


def test_validate_clean():
    assert validate(make_set((10001, "location", 2)), REGISTRY) == []


def test_validate_missing_namespace():
    diagnostics = validate(make_set((10001, "location", 9)), REGISTRY)
    assert len(diagnostics) == 1
    assert "no namespace 9" in diagnostics[0]


def test_validate_unknown_service():
    diagnostics = validate(make_set((10001, "wifi", 1)), REGISTRY)
    assert len(diagnostics) == 1
    assert "wifi" in diagnostics[0] and "10001" in diagnostics[0]


def test_validate_group_bindings():
    group = ContainerGroup("G", frozenset({("location", 7)}))
    diagnostics = validate(PolicySet(), REGISTRY, [group])
    assert len(diagnostics) == 1
    assert "'G'" in diagnostics[0]


# -- groups file ----------------------------------------------------------------


def test_parse_groups():
    groups = parse_groups("Untrusted location 2\nUntrusted subinfo 1\nSafe ime 1\n")
    assert groups["Untrusted"].bindings == frozenset({("location", 2), ("subinfo", 1)})
    assert groups["Safe"].bindings == frozenset({("ime", 1)})


def test_parse_groups_duplicate_service():
    with pytest.raises(DuplicateRuleError):
        parse_groups("G location 1\nG location 2\n")


# -- store ----------------------------------------------------------------------


def test_store_persists_with_atomic_rewrite(tmp_path):
    path = tmp_path / "nspolicy"
    path.write_text("10001 location 1\n")
    store = PolicyStore.load(path, groups=GROUPS)
    store.apply(SetRule(PolicyRule(42, "phone", 1)))
    assert path.read_text() == "42 phone 1\n10001 location 1\n"
    store.apply(AssignGroup(10001, "Untrusted"))
    reloaded = parse_policy(path.read_text())
    assert reloaded == store.current


def test_store_notifies_listeners(tmp_path):
    store = PolicyStore()
    seen = []
    store.subscribe(lambda ps: seen.append(ps.version))
    store.apply(SetRule(PolicyRule(1, "a", 1)))
    store.apply(RemoveRule(1, "a"))
    assert seen == [1, 2]
