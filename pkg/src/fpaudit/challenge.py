"""Randomized challenge rendering and response judging.

Placeholders in templates are ``#name#`` with names over ``[a-z0-9_]+``.
A ``#`` that does not open a bound placeholder passes through untouched.
Random string and dir-file values draw from the ``[a-z0-9]`` alphabet;
binary values render as lowercase hex.
"""

from __future__ import annotations

import random
import re
import secrets
from dataclasses import dataclass, field

from .database import Database, VariableSpec, VersionTest
from .versions import Version, VersionSet, render_version

_PLACEHOLDER_RE = re.compile(rb"#([a-z0-9_]+)#")
_STRING_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"


class RenderError(ValueError):
    """Raised for an unbound placeholder; the message names it."""


class RandomnessSource:
    """Uniform draws for challenge variables.

    Unseeded instances use a cryptographically secure generator; a seed
    switches to a reproducible PRNG for tests.  An instance must be owned
    by a single audit run.
    """

    def __init__(self, seed: int | None = None):
        self.seeded = seed is not None
        self._rng = random.Random(seed) if seed is not None else secrets.SystemRandom()

    def randint(self, lo: int, hi: int) -> int:
        return self._rng.randint(lo, hi)

    def choice(self, seq):
        return seq[self._rng.randrange(len(seq))]

    def token(self, length: int, alphabet: str = _STRING_ALPHABET) -> str:
        return "".join(self.choice(alphabet) for _ in range(length))

    def randbytes(self, length: int) -> bytes:
        return bytes(self._rng.randrange(256) for _ in range(length))


def draw(spec: VariableSpec, rng: RandomnessSource, family: VersionSet | None = None):
    """Draw one value for a variable according to its spec."""
    if spec.format == "integer":
        return rng.randint(spec.min, spec.max)
    if spec.format == "string":
        return rng.token(spec.length)
    if spec.format == "binary":
        return rng.randbytes(spec.length)
    if spec.format == "version":
        if family is None or not len(family):
            raise RenderError(f"variable {spec.name!r}: version format needs a family to draw from")
        return rng.choice(family.versions)
    if spec.format == "dir-file":
        return f"{rng.token(8)}/{rng.token(8)}.txt"
    raise RenderError(f"variable {spec.name!r}: unknown format {spec.format!r}")


def value_bytes(value) -> bytes:
    """Canonical byte form substituted into templates."""
    if isinstance(value, bool):
        return b"true" if value else b"false"
    if isinstance(value, int):
        return str(value).encode("ascii")
    if isinstance(value, bytes):
        return value.hex().encode("ascii")
    if isinstance(value, Version):
        return render_version(value).encode("ascii")
    if isinstance(value, str):
        return value.encode("utf-8")
    raise RenderError(f"cannot render value of type {type(value).__name__}")


@dataclass(frozen=True)
class Binding:
    """Drawn values keyed by variable name."""

    values: dict[str, object] = field(default_factory=dict)

    def rendered(self) -> dict[str, bytes]:
        return {name: value_bytes(v) for name, v in self.values.items()}

    def canonical(self) -> dict[str, str]:
        """JSON-safe form, used for logging and signatures."""
        return {name: value_bytes(v).decode("utf-8") for name, v in sorted(self.values.items())}


def draw_binding(entry: VersionTest, rng: RandomnessSource, family: VersionSet | None = None) -> Binding:
    return Binding({name: draw(spec, rng, family) for name, spec in entry.variables.items()})


@dataclass(frozen=True)
class Tags:
    start: bytes = b""
    end: bytes = b""

    def apply(self, payload: bytes) -> bytes:
        return self.start + payload + self.end


def tags_for(db: Database, entry: VersionTest, side: str) -> Tags:
    """Start/end tag strings for one side, honoring per-entry overrides."""
    defaults = db.meta.default_values

    def flag(name: str) -> bool:
        override = entry.tag_overrides.get(f"{side}.{name}")
        raw = override if override is not None else defaults.get(f"version.test.{side}.{name}", "false")
        return str(raw).lower() == "true"

    start = str(defaults.get(f"version.test.{side}.starttag", "")) if flag("setstarttag") else ""
    end = str(defaults.get(f"version.test.{side}.endtag", "")) if flag("setendtag") else ""
    return Tags(start.encode("utf-8"), end.encode("utf-8"))


def render(template: bytes, binding: Binding, tags: Tags = Tags()) -> bytes:
    """Substitute placeholders and apply tags; deterministic."""
    values = binding.rendered()

    def sub(match: re.Match) -> bytes:
        name = match.group(1).decode("ascii")
        if name not in values:
            raise RenderError(f"unbound placeholder #{name}#")
        return values[name]

    return tags.apply(_PLACEHOLDER_RE.sub(sub, template))


@dataclass(frozen=True)
class RenderedTest:
    version_under_test: Version
    challenge_payload: bytes
    expected_payload: bytes
    deadline: float  # seconds
    binding: Binding
    challenge_interface: str
    response_interface: str


def render_test(db: Database, version: Version, rng: RandomnessSource) -> RenderedTest:
    """Draw fresh randomness and render one entry's challenge and expectation."""
    entry = db.entries[version]
    if not entry.has_payload:
        raise RenderError(f"entry {render_version(version)} has no intrinsic test payload")
    binding = draw_binding(entry, rng, db.family)
    challenge = render(entry.challenge_template, binding, tags_for(db, entry, "challenge"))
    expected = render(entry.expect_template, binding, tags_for(db, entry, "expect"))
    return RenderedTest(
        version_under_test=version,
        challenge_payload=challenge,
        expected_payload=expected,
        deadline=entry.wait_time,
        binding=binding,
        challenge_interface=db.meta.challenge_interface,
        response_interface=db.meta.response_interface,
    )


@dataclass(frozen=True)
class JudgeResult:
    delta: bool
    reason: str | None  # None when delta, else mismatch | timeout | transport-error


def judge(actual: bytes | None, expected: bytes, elapsed: float, deadline: float,
          transport_error: str | None = None) -> JudgeResult:
    """Decide one test: response must match exactly and arrive in time.

    The deadline is inclusive; a missing response is a timeout.
    """
    if transport_error is not None:
        return JudgeResult(False, "transport-error")
    if actual is None:
        return JudgeResult(False, "timeout")
    if elapsed > deadline:
        return JudgeResult(False, "timeout")
    if actual != expected:
        return JudgeResult(False, "mismatch")
    return JudgeResult(True, None)
