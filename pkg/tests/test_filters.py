import random
import string

import pytest

from app.errors import FilterSyntaxError, UnknownAttribute
from app.security.filters import (
    And, Equals, Or, Presence, build_search_filter, escape_filter_value, matches, parse, render,
    search_registry, unescape_filter_value,
)


@pytest.mark.parametrize("raw, escaped", [
    ("*", r"\2a"),
    ("admin) (| (password = *))", r"admin\29 \28| \28password = \2a\29\29"),
    ("jsmith", "jsmith"),
    ("back\\slash", r"back\5cslash"),
    ("nul\x00", r"nul\00"),
])
def test_escape_filter_value(raw, escaped):
    assert escape_filter_value(raw) == escaped
    assert unescape_filter_value(escaped) == raw


def test_escaping_is_injective():
    rng = random.Random(3)
    alphabet = string.ascii_letters + string.digits + "*()\\\x00=&|! é"
    seen = {}
    for _ in range(10_000):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        escaped = escape_filter_value(raw)
        assert seen.setdefault(escaped, raw) == raw
        assert unescape_filter_value(escaped) == raw


def test_only_searchable_attributes():
    assert build_search_filter("uid", "x") == Equals("uid", "x")
    with pytest.raises(UnknownAttribute):
        build_search_filter("password", "x")


def test_render_and_parse_round_trip():
    tree = And((Equals("uid", "a*b"), Or((Presence("email"), Equals("cn", "(x)")))))
    text = render(tree)
    assert text == r"(&(uid=a\2ab)(|(email=*)(cn=\28x\29)))"
    assert parse(text) == tree


@pytest.mark.parametrize("text", ["uid=x", "(uid=x", "(uidx)", "(&)", "(uid=x))", r"(uid=a\zz)", "(uid=(x)"])
def test_parse_rejects_malformed_filters(text):
    with pytest.raises(FilterSyntaxError):
        parse(text)


@pytest.fixture
def populated_registry(fleet):
    registry = fleet.registry
    rng = random.Random(17)
    for i in range(100):
        uid = f"user{i:03d}"
        registry.create_account(uid, {
            "uid": uid,
            "email": f"{uid}@example.edu",
            "full_name": "".join(rng.choice(string.ascii_lowercase) for _ in range(8)),
        })
    return registry


def linear_scan(registry, attribute, raw):
    key = {"uid": "uid", "email": "email", "cn": "full_name"}[attribute]
    return [a.person_id for a in registry.list_accounts() if a.attributes.get(key) == raw]


@pytest.mark.parametrize("raw", [
    "*",
    "user001)(uid=*",
    "admin) (| (password = *))",
    "*)(|(uid=*",
    "user00*",
    "\\",
    "user042",
])
def test_injection_payloads_match_only_literally(populated_registry, raw):
    text = render(build_search_filter("uid", raw))
    found = [a.person_id for a in search_registry(populated_registry, text)]
    assert found == linear_scan(populated_registry, "uid", raw)


def test_search_agrees_with_linear_scan(populated_registry):
    rng = random.Random(9)
    accounts = populated_registry.list_accounts()
    for _ in range(200):
        attribute = rng.choice(["uid", "email", "cn"])
        if rng.random() < 0.5:
            account = rng.choice(accounts)
            raw = account.attributes[{"uid": "uid", "email": "email", "cn": "full_name"}[attribute]]
        else:
            raw = "".join(rng.choice("u*()\\=|&0") for _ in range(rng.randint(1, 6)))
        text = render(build_search_filter(attribute, raw))
        found = [a.person_id for a in search_registry(populated_registry, text)]
        assert found == linear_scan(populated_registry, attribute, raw)


def test_presence_matches_every_account(populated_registry):
    assert len(search_registry(populated_registry, "(uid=*)")) == 100
    assert not matches(Presence("telephone"), {"uid": "x"})
