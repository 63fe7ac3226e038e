"""Oracle-mode metadata service.

The directory and the digest array are single logical processes whose
handlers run atomically, so their operations are trivially linearizable.
The same sequential objects double as the reference semantics the
checker replays against.

The directory is a timestamped store: a write carries its own timestamp
and takes effect only when that timestamp is at least the stored one,
and it always acknowledges. The equal case must take effect too; the
protocol's write-back path depends on it.
"""
from __future__ import annotations

from typing import Any, Callable

from .net import Message, MsgKind, Process
from .types import NIL, HarnessError, Metadata, Timestamp, TS_INIT

DIR_PID = "dir"
HASH_PID = "hash"


class TimestampedStore:
    """Sequential timestamped register: (ts, payload) with a monotone
    guard. Fresh state is ((0, nil), None)."""

    def __init__(self) -> None:
        self.ts: Timestamp = TS_INIT
        self.payload: Any = None

    def tswrite(self, ts: Timestamp, payload: Any) -> str:
        if ts >= self.ts:
            self.ts = ts
            self.payload = payload
        return "OK"

    def tsread(self) -> tuple[Timestamp, Any]:
        return self.ts, self.payload


class HashArraySpec:
    """Sequential write-once digest array indexed by timestamp."""

    def __init__(self) -> None:
        self.entries: dict[Timestamp, str] = {}
        self.writers: dict[Timestamp, int] = {}

    def write(self, index: Timestamp, digest: str, writer: int) -> str:
        prior_writer = self.writers.get(index)
        if prior_writer is not None and (prior_writer != writer or self.entries[index] != digest):
            raise HarnessError(
                f"single-writer violation on digest index {index.render()}: "
                f"writer {writer} after writer {prior_writer}"
            )
        self.writers[index] = writer
        self.entries[index] = digest
        return "OK"

    def read(self, index: Timestamp) -> str | None:
        return self.entries.get(index)


class DirectoryOracle(Process):
    """Directory as one trusted process. Write requests are accepted only
    from writer clients; the channel tells us who sent what."""

    def __init__(self, pid: str, client_ids: dict[str, int], writer_pids: frozenset[str]):
        super().__init__(pid)
        self.store = TimestampedStore()
        self.client_ids = client_ids
        self.writer_pids = writer_pids

    def on_message(self, msg: Message) -> None:
        if msg.kind is MsgKind.DIR_READ:
            ts, payload = self.store.tsread()
            self.send(MsgKind.DIR_READ_RESP, msg.src, tag=msg["tag"], ts=ts, md=payload)
        elif msg.kind is MsgKind.DIR_WRITE:
            if msg.src not in self.writer_pids:
                self.trace_note("dir-write-rejected", src=msg.src)
                return
            md: Metadata = msg["md"]
            if md.ts.cid != self.client_ids[msg.src]:
                raise HarnessError(
                    f"directory write from {msg.src} with foreign timestamp {md.ts.render()}"
                )
            self.store.tswrite(md.ts, md)
            self.send(MsgKind.DIR_WRITE_RESP, msg.src, tag=msg["tag"])

    def final_state(self) -> dict:
        ts, payload = self.store.tsread()
        return {"ts": ts, "md": payload}


class HashArrayOracle(Process):
    """Digest array as one trusted process."""

    def __init__(self, pid: str, client_ids: dict[str, int]):
        super().__init__(pid)
        self.array = HashArraySpec()
        self.client_ids = client_ids

    def on_message(self, msg: Message) -> None:
        if msg.kind is MsgKind.HASH_WRITE:
            index: Timestamp = msg["index"]
            writer = self.client_ids.get(msg.src, NIL)
            if writer != index.cid:
                raise HarnessError(
                    f"digest index {index.render()} written by client {writer}"
                )
            self.array.write(index, msg["digest"], writer)
            self.send(MsgKind.HASH_WRITE_RESP, msg.src, tag=msg["tag"])
        elif msg.kind is MsgKind.HASH_READ:
            digest = self.array.read(msg["index"])
            self.send(MsgKind.HASH_READ_RESP, msg.src, tag=msg["tag"], digest=digest)

    def final_state(self) -> dict:
        return {"entries": {idx.render(): d for idx, d in self.array.entries.items()}}


class OracleMdsDriver:
    """Client-side access to the oracle metadata service.

    Each call sends one request and resolves the continuation when the
    matching response arrives; the owner routes inbound metadata messages
    here. The structured "mds" record channel captures operation
    intervals for the checker.
    """

    def __init__(self, owner: Process, dir_pid: str = DIR_PID, hash_pid: str = HASH_PID):
        self.owner = owner
        self.dir_pid = dir_pid
        self.hash_pid = hash_pid
        self._next_tag = 0
        self._pending: dict[int, tuple[str, Callable[..., None]]] = {}

    def _tag(self) -> int:
        self._next_tag += 1
        return self._next_tag

    def tsread(self, done: Callable[[Timestamp, Metadata | None], None]) -> None:
        tag = self._tag()
        self._pending[tag] = ("tsread", done)
        self.owner.record("mds", proc=self.owner.pid, op="tsread", tag=tag, phase="start")
        self.owner.send(MsgKind.DIR_READ, self.dir_pid, tag=tag)

    def tswrite(self, md: Metadata, done: Callable[[], None]) -> None:
        tag = self._tag()
        self._pending[tag] = ("tswrite", done)
        self.owner.record(
            "mds", proc=self.owner.pid, op="tswrite", tag=tag, phase="start", ts=md.ts, md=md
        )
        self.owner.send(MsgKind.DIR_WRITE, self.dir_pid, tag=tag, md=md)

    def hash_write(self, index: Timestamp, digest: str, done: Callable[[], None]) -> None:
        tag = self._tag()
        self._pending[tag] = ("hashwrite", done)
        self.owner.record(
            "mds", proc=self.owner.pid, op="hashwrite", tag=tag, phase="start",
            index=index, digest=digest,
        )
        self.owner.send(MsgKind.HASH_WRITE, self.hash_pid, tag=tag, index=index, digest=digest)

    def hash_read(self, index: Timestamp, done: Callable[[str | None], None]) -> None:
        tag = self._tag()
        self._pending[tag] = ("hashread", done)
        self.owner.record(
            "mds", proc=self.owner.pid, op="hashread", tag=tag, phase="start", index=index
        )
        self.owner.send(MsgKind.HASH_READ, self.hash_pid, tag=tag, index=index)

    def handle(self, msg: Message) -> bool:
        """Consume a metadata response addressed to the owner. Returns
        False when the message belongs to someone else's plane."""
        if msg.kind not in (
            MsgKind.DIR_READ_RESP,
            MsgKind.DIR_WRITE_RESP,
            MsgKind.HASH_READ_RESP,
            MsgKind.HASH_WRITE_RESP,
        ):
            return False
        entry = self._pending.pop(msg["tag"], None)
        if entry is None:
            return True  # response for a superseded operation
        op, done = entry
        if msg.kind is MsgKind.DIR_READ_RESP:
            ts, md = msg["ts"], msg["md"]
            self.owner.record(
                "mds", proc=self.owner.pid, op=op, tag=msg["tag"], phase="end", ts=ts, md=md
            )
            done(ts, md)
        elif msg.kind is MsgKind.HASH_READ_RESP:
            digest = msg["digest"]
            self.owner.record(
                "mds", proc=self.owner.pid, op=op, tag=msg["tag"], phase="end", digest=digest
            )
            done(digest)
        else:
            self.owner.record("mds", proc=self.owner.pid, op=op, tag=msg["tag"], phase="end")
            done()
        return True
