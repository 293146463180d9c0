"""Semantic version labels with a total order.

Canonical label grammar: ``MAJOR[.MINOR[.PATCH]][PRE]`` with ``PRE`` one of
``bN`` (beta) or ``rcN`` (release candidate).  Missing minor/patch default
to zero.  A trailing ``-suffix`` (e.g. ``20.9.85-car``) is preserved in the
raw label but carries no ordering weight.

Ordering is lexicographic on (major, minor, patch); a pre-release orders
strictly below the plain release of the same triple, and pre-release tags
order by stage (b < rc) then ordinal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import total_ordering

_PRE_STAGES = {"b": 0, "rc": 1}

_LABEL_RE = re.compile(
    r"""^
    (?P<major>\d+)
    (?:\.(?P<minor>\d+))?
    (?:\.(?P<patch>\d+))?
    (?P<pre>(?:b|rc)\d+)?
    (?P<suffix>-[0-9A-Za-z.\-]+)?
    $""",
    re.VERBOSE,
)


class VersionParseError(ValueError):
    """Raised when a label cannot be parsed; the message names the label."""


@dataclass(frozen=True)
class PreRelease:
    stage: str  # "b" or "rc"
    ordinal: int

    def sort_key(self) -> tuple[int, int]:
        return (_PRE_STAGES[self.stage], self.ordinal)

    def __str__(self) -> str:
        return f"{self.stage}{self.ordinal}"


@total_ordering
@dataclass(frozen=True)
class Version:
    major: int
    minor: int = 0
    patch: int = 0
    pre: PreRelease | None = None
    raw: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.major < 0 or self.minor < 0 or self.patch < 0:
            raise VersionParseError(f"negative component in version {self.raw or self!s}")

    def sort_key(self) -> tuple:
        # Plain releases rank above any pre-release of the same triple.
        pre_key = self.pre.sort_key() if self.pre else (len(_PRE_STAGES), 0)
        return (self.major, self.minor, self.patch, *pre_key)

    def __lt__(self, other: "Version") -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.sort_key() == other.sort_key()

    def __hash__(self) -> int:
        return hash(self.sort_key())

    def __str__(self) -> str:
        return render_version(self)


def parse_version(label: str) -> Version:
    """Parse a version label; missing minor/patch default to 0."""
    if not label:
        raise VersionParseError("empty version label")
    m = _LABEL_RE.match(label.strip())
    if not m:
        raise VersionParseError(f"malformed version label: {label!r}")
    pre = None
    if m.group("pre"):
        stage = "rc" if m.group("pre").startswith("rc") else "b"
        pre = PreRelease(stage, int(m.group("pre")[len(stage):]))
    return Version(
        major=int(m.group("major")),
        minor=int(m.group("minor") or 0),
        patch=int(m.group("patch") or 0),
        pre=pre,
        raw=label.strip(),
    )


def render_version(v: Version) -> str:
    """Canonical label: always three numeric parts plus any pre-release tag."""
    s = f"{v.major}.{v.minor}.{v.patch}"
    if v.pre:
        s += str(v.pre)
    return s


def cmp(a: Version, b: Version) -> int:
    """Three-way comparison: -1, 0 or 1."""
    ka, kb = a.sort_key(), b.sort_key()
    return (ka > kb) - (ka < kb)


def branch_origin(v: Version, level: str = "minor") -> Version:
    """First version of the branch ``v`` lives on.

    ``minor`` zeroes the patch, ``major`` zeroes minor and patch; any
    pre-release tag is dropped.  A pre-release of the branch start itself
    (e.g. 7.3.0rc4) is already its own origin: dropping the tag would move
    the result above the input.
    """
    if level == "minor":
        origin = Version(v.major, v.minor, 0)
    elif level == "major":
        origin = Version(v.major, 0, 0)
    else:
        raise ValueError(f"unknown branch level: {level!r}")
    return v if origin > v else origin


@dataclass(frozen=True)
class VersionSet:
    """All versions of one software family, in ascending order."""

    family_name: str
    versions: tuple[Version, ...]

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.versions))
        if len({render_version(v) for v in ordered}) != len(ordered):
            raise ValueError(f"duplicate version labels in family {self.family_name!r}")
        object.__setattr__(self, "versions", ordered)

    def __iter__(self):
        return iter(self.versions)

    def __len__(self) -> int:
        return len(self.versions)

    def __contains__(self, v: Version) -> bool:
        return v in self.versions

    def labels(self) -> list[str]:
        return [render_version(v) for v in self.versions]
