"""Message and process plumbing shared by the protocol modules.

Processes never see the scheduler clock or each other's objects; they
only receive immutable messages and emit new ones through the runtime
port bound by the simulator. Channels are authenticated: the ``src``
field is set by the runtime, not by the sender.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable

from .types import Metadata, TaggedValue, Timestamp, render_value


class MsgKind(enum.Enum):
    # data plane
    WRITE = "WRITE"
    WRITE_ACK = "WRITE-ACK"
    COMMIT = "COMMIT"
    READ = "READ"
    READ_VAL = "READ-VAL"
    # metadata plane, oracle mode
    DIR_READ = "DIR-READ"
    DIR_READ_RESP = "DIR-READ-RESP"
    DIR_WRITE = "DIR-WRITE"
    DIR_WRITE_RESP = "DIR-WRITE-RESP"
    HASH_READ = "HASH-READ"
    HASH_READ_RESP = "HASH-READ-RESP"
    HASH_WRITE = "HASH-WRITE"
    HASH_WRITE_RESP = "HASH-WRITE-RESP"
    # metadata plane, replicated mode
    META_STORE = "META-STORE"
    META_ACK = "META-ACK"
    META_QUERY = "META-QUERY"
    META_UPDATE = "META-UPDATE"
    META_UNSUB = "META-UNSUB"
    META_WRITEBACK = "META-WRITEBACK"
    META_ECHO = "META-ECHO"


@dataclass(frozen=True)
class Message:
    kind: MsgKind
    src: str
    dst: str
    fields: Any  # mapping proxy over an immutable-valued dict

    def get(self, key: str, default: Any = None) -> Any:
        return self.fields.get(key, default)

    def __getitem__(self, key: str) -> Any:
        return self.fields[key]

    def render(self) -> dict:
        out = {"kind": self.kind.value, "src": self.src, "dst": self.dst}
        for key in sorted(self.fields):
            out[key] = render_field(self.fields[key])
        return out


def make_message(kind: MsgKind, src: str, dst: str, **fields: Any) -> Message:
    return Message(kind, src, dst, MappingProxyType(dict(fields)))


def render_field(value: Any) -> Any:
    """Render a message field or state entry for the JSON trace."""
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, bytes):
        return render_value(value)
    if isinstance(value, Timestamp):
        return value.render()
    if isinstance(value, Metadata):
        return value.render()
    if isinstance(value, TaggedValue):
        return value.render()
    if isinstance(value, (frozenset, set)):
        return sorted(render_field(v) for v in value)
    if isinstance(value, (tuple, list)):
        return [render_field(v) for v in value]
    if isinstance(value, dict):
        return {str(k): render_field(v) for k, v in sorted(value.items(), key=lambda kv: str(kv[0]))}
    if isinstance(value, enum.Enum):
        return value.value
    raise TypeError(f"unrenderable trace field of type {type(value).__name__}")


class Port:
    """Runtime interface handed to a process when a simulation starts.

    ``send`` queues a message for asynchronous delivery. ``trace`` adds a
    free-form note to the trace. ``record`` feeds structured side channels
    (client operation events, metadata sub-operations) that the simulator
    assembles into the history; the simulator stamps the current step.
    """

    def __init__(
        self,
        sender: Callable[[Message], None],
        tracer: Callable[..., None],
        recorder: Callable[..., None],
    ):
        self._sender = sender
        self._tracer = tracer
        self._recorder = recorder

    def send(self, kind: MsgKind, src: str, dst: str, **fields: Any) -> None:
        self._sender(make_message(kind, src, dst, **fields))

    def trace(self, proc: str, note: str, **payload: Any) -> None:
        self._tracer(proc, note, **payload)

    def record(self, channel: str, **entry: Any) -> None:
        self._recorder(channel, **entry)


class Process:
    """Base class for every simulated participant."""

    def __init__(self, pid: str):
        self.pid = pid
        self.port: Port | None = None

    def send(self, kind: MsgKind, dst: str, **fields: Any) -> None:
        assert self.port is not None, "process used outside a simulation"
        self.port.send(kind, self.pid, dst, **fields)

    def trace_note(self, note: str, **payload: Any) -> None:
        if self.port is not None:
            self.port.trace(self.pid, note, **payload)

    def record(self, channel: str, **entry: Any) -> None:
        assert self.port is not None, "process used outside a simulation"
        self.port.record(channel, **entry)

    def on_message(self, msg: Message) -> None:
        raise NotImplementedError

    def final_state(self) -> dict:
        """State snapshot appended to the trace when the run ends."""
        return {}


@dataclass
class Delivery:
    """A schedulable event: a message delivery, a client invocation, a
    crash, or a scripted adversary action."""

    seq: int
    kind: str  # "deliver" | "invoke" | "crash" | "adversary"
    created_step: int
    msg: Message | None = None
    payload: dict = field(default_factory=dict)
