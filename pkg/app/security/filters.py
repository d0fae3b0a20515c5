"""Structured registry search filters.

Values live in the tree as data and only meet filter syntax when `render`
passes them through the escaper. The registry side parses rendered text
back into a tree before matching, so an escaped payload can only ever be a
literal value.
"""

import re
from dataclasses import dataclass

from ldap3.utils.conv import escape_filter_chars

from app.errors import FilterSyntaxError, UnknownAttribute

SEARCHABLE_ATTRIBUTES = frozenset({"uid", "email", "cn"})

# search attribute -> account attribute
ACCOUNT_ATTRIBUTE = {"uid": "uid", "email": "email", "cn": "full_name"}

_HEX_ESCAPE = re.compile(r"\\([0-9a-fA-F]{2})")


def escape_filter_value(raw):
    """Escape `*`, `(`, `)`, `\\` and NUL to their two-hex-digit forms."""
    return escape_filter_chars(raw)


def unescape_filter_value(escaped):
    if re.search(r"\\(?![0-9a-fA-F]{2})", escaped):
        raise FilterSyntaxError(f"dangling escape in {escaped!r}")
    return _HEX_ESCAPE.sub(lambda m: chr(int(m.group(1), 16)), escaped)


@dataclass(frozen=True)
class Equals:
    attribute: str
    value: str


@dataclass(frozen=True)
class Presence:
    attribute: str


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


SearchFilter = Equals | Presence | And | Or


def build_search_filter(attribute, raw_value):
    if attribute not in SEARCHABLE_ATTRIBUTES:
        raise UnknownAttribute(attribute)
    return Equals(attribute, raw_value)


def render(node):
    if isinstance(node, Equals):
        return f"({node.attribute}={escape_filter_value(node.value)})"
    if isinstance(node, Presence):
        return f"({node.attribute}=*)"
    if isinstance(node, And):
        return "(&" + "".join(render(child) for child in node.children) + ")"
    if isinstance(node, Or):
        return "(|" + "".join(render(child) for child in node.children) + ")"
    raise TypeError(f"not a filter node: {node!r}")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def parse(self):
        node = self._node()
        if self.pos != len(self.text):
            raise FilterSyntaxError(f"trailing text at offset {self.pos}")
        return node

    def _expect(self, char):
        if self.pos >= len(self.text) or self.text[self.pos] != char:
            raise FilterSyntaxError(f"expected {char!r} at offset {self.pos}")
        self.pos += 1

    def _node(self):
        self._expect("(")
        if self.pos < len(self.text) and self.text[self.pos] in "&|":
            combinator = self.text[self.pos]
            self.pos += 1
            children = []
            while self.pos < len(self.text) and self.text[self.pos] == "(":
                children.append(self._node())
            self._expect(")")
            if not children:
                raise FilterSyntaxError("empty combinator")
            return And(tuple(children)) if combinator == "&" else Or(tuple(children))

        end = self.text.find(")", self.pos)
        if end < 0:
            raise FilterSyntaxError("unterminated item")
        item = self.text[self.pos:end]
        if "(" in item:
            raise FilterSyntaxError(f"unexpected '(' in {item!r}")
        self.pos = end + 1
        attribute, sep, value = item.partition("=")
        if not sep or not attribute:
            raise FilterSyntaxError(f"item {item!r} is not attribute=value")
        if value == "*":
            return Presence(attribute)
        return Equals(attribute, unescape_filter_value(value))


def parse(text):
    return _Parser(text).parse()


def matches(node, attributes):
    if isinstance(node, Equals):
        key = ACCOUNT_ATTRIBUTE.get(node.attribute)
        return key is not None and attributes.get(key) == node.value
    if isinstance(node, Presence):
        key = ACCOUNT_ATTRIBUTE.get(node.attribute)
        return key is not None and attributes.get(key) is not None
    if isinstance(node, And):
        return all(matches(child, attributes) for child in node.children)
    if isinstance(node, Or):
        return any(matches(child, attributes) for child in node.children)
    return False


def search_registry(registry, filter_text):
    """Run rendered filter text against the registry's account table."""
    node = parse(filter_text)
    return [account for account in registry.list_accounts() if matches(node, account.attributes)]
