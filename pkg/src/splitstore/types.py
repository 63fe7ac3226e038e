"""Core types shared by every layer: timestamps, tagged values, metadata
records, and the digest facility used to validate data replies.

Values travel as ``bytes``. The absent value (a read that observed no
completed write) is represented by ``None`` and rendered as ``null`` in
JSON output.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

# Client id that sorts below every real client id. Real ids are positive.
NIL = 0


class ConfigError(Exception):
    """Raised for invalid run configurations before a simulation starts."""


class HarnessError(Exception):
    """Raised when the harness itself is misused (distinct from protocol
    misbehavior, which is reported through checker verdicts)."""


class Ordering(enum.Enum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True)
class Timestamp:
    """Multi-writer timestamp: a counter paired with the writer id that
    produced it. Ordered lexicographically, counter first."""

    num: int
    cid: int

    def key(self) -> tuple[int, int]:
        return (self.num, self.cid)

    def __lt__(self, other: "Timestamp") -> bool:
        return self.key() < other.key()

    def __le__(self, other: "Timestamp") -> bool:
        return self.key() <= other.key()

    def __gt__(self, other: "Timestamp") -> bool:
        return self.key() > other.key()

    def __ge__(self, other: "Timestamp") -> bool:
        return self.key() >= other.key()

    def next_for(self, cid: int) -> "Timestamp":
        """The timestamp a writer with id ``cid`` produces after reading
        this one: counter bumped by one, writer id replaced."""
        if cid <= NIL:
            raise HarnessError(f"cannot increment on behalf of id {cid}")
        return Timestamp(self.num + 1, cid)

    def render(self) -> str:
        cid = "nil" if self.cid == NIL else str(self.cid)
        return f"{self.num}:{cid}"

    @staticmethod
    def parse(text: str) -> "Timestamp":
        num_part, _, cid_part = text.partition(":")
        cid = NIL if cid_part == "nil" else int(cid_part)
        return Timestamp(int(num_part), cid)


# The timestamp every store starts from.
TS_INIT = Timestamp(0, NIL)


def ts_compare(a: Timestamp, b: Timestamp) -> Ordering:
    if a.key() < b.key():
        return Ordering.LESS
    if a.key() > b.key():
        return Ordering.GREATER
    return Ordering.EQUAL


@dataclass(frozen=True)
class TaggedValue:
    """A value labeled with the timestamp of the write that produced it."""

    ts: Timestamp
    val: bytes | None

    def render(self) -> dict:
        return {"ts": self.ts.render(), "val": render_value(self.val)}


@dataclass(frozen=True)
class Metadata:
    """Directory record for the most recent write: its timestamp and the
    set of data replicas known to have acknowledged the value."""

    ts: Timestamp
    replicas: frozenset[int]

    def render(self) -> dict:
        return {"ts": self.ts.render(), "replicas": sorted(self.replicas)}


def render_value(val: bytes | None) -> str | None:
    if val is None:
        return None
    return val.decode("latin-1")


def parse_value(text: str | None) -> bytes | None:
    if text is None:
        return None
    return text.encode("latin-1")


class HashMode(enum.Enum):
    """How digests are produced.

    ORACLE models an idealized collision-free function as a list of every
    value ever hashed; the digest is the value's position in that list.
    PRODUCTION uses a real hash. FORGEABLE behaves like PRODUCTION until
    ``forge`` installs a second preimage, which models a broken hash.
    """

    ORACLE = "oracle"
    PRODUCTION = "production"
    FORGEABLE = "forgeable"


class DigestFacility:
    """Produces digests for values and audits collisions.

    One instance is shared by all processes in a run, mirroring a hash
    function everyone agrees on. In ORACLE mode the instance keeps the
    list of values seen so far and returns positions, so distinct values
    can never share a digest. ``forge`` is rejected unless the mode is
    FORGEABLE.
    """

    def __init__(self, mode: HashMode = HashMode.ORACLE):
        self.mode = mode
        self._positions: dict[bytes, int] = {}
        self._forged: dict[bytes, str] = {}
        # digest token -> first value observed for it
        self._first_preimage: dict[str, bytes] = {}
        self.collisions: list[tuple[bytes, bytes, str]] = []

    def digest(self, value: bytes) -> str:
        if value is None:
            raise HarnessError("cannot digest the absent value")
        if not isinstance(value, bytes):
            raise HarnessError(f"values are bytes, got {type(value).__name__}")
        if self.mode is HashMode.ORACLE:
            pos = self._positions.setdefault(value, len(self._positions))
            token = f"h{pos:08d}"
        else:
            if value in self._forged:
                token = self._forged[value]
            else:
                token = hashlib.sha256(value).hexdigest()
        self._note(token, value)
        return token

    def forge(self, value: bytes, target: str) -> None:
        """Install ``value`` as a second preimage of ``target``. Models an
        adversary that defeats the hash; only legal in FORGEABLE mode."""
        if self.mode is not HashMode.FORGEABLE:
            raise HarnessError(f"forge is not available in {self.mode.value} mode")
        self._forged[value] = target
        self._note(target, value)

    def collision_resistant(self) -> bool:
        """True when the mode guarantees distinct values get distinct
        digests, which is what the integrity monitor relies on."""
        return self.mode in (HashMode.ORACLE, HashMode.PRODUCTION)

    def _note(self, token: str, value: bytes) -> None:
        first = self._first_preimage.setdefault(token, value)
        if first != value:
            record = (first, value, token)
            if record not in self.collisions:
                self.collisions.append(record)
            if self.collision_resistant():
                raise HarnessError(
                    f"digest collision in {self.mode.value} mode: "
                    f"{first!r} and {value!r} -> {token}"
                )
