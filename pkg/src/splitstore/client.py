"""Writer and reader clients.

A write runs through five phases: read the directory to learn the
latest timestamp, publish the digest of the new value, send the value
to all data replicas, store the new directory record once a quorum of
acknowledgments is in, then fire commit messages and return. A read
learns the latest directory record, asks the replicas it names, and
accepts the first reply that passes the digest check; replies carrying
a newer timestamp than the directory record trigger one directory
re-read each, and are accepted only if the directory has caught up.

Clients are single-threaded state machines: the simulator delivers one
message at a time, and at most one operation per client is in flight.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from .net import Message, MsgKind, Process
from .types import DigestFacility, HarnessError, Metadata, TaggedValue, Timestamp, TS_INIT


class WritePhase(enum.Enum):
    READ_DIR = "READ-DIR"
    WRITE_HASH = "WRITE-HASH"
    WRITE_DATA = "WRITE-DATA"
    WRITE_DIR = "WRITE-DIR"
    COMMIT = "COMMIT"


@dataclass
class WriteContext:
    op_id: int
    value: bytes
    phase: WritePhase = WritePhase.READ_DIR
    ts: Timestamp | None = None
    acks: set[int] = field(default_factory=set)


@dataclass
class ReadContext:
    op_id: int
    md: Metadata | None = None
    readval: TaggedValue | None = None


class ClientBase(Process):
    """Shared plumbing: id mapping, driver routing, history records."""

    def __init__(
        self,
        pid: str,
        cid: int,
        digests: DigestFacility,
        data_pids: list[str],
        t: int,
    ):
        super().__init__(pid)
        self.cid = cid
        self.digests = digests
        self.data_pids = data_pids
        self.t = t
        self.driver = None  # bound by the simulator wiring

    def attach_driver(self, driver: Any) -> None:
        self.driver = driver

    def replica_index(self, pid: str) -> int:
        return self.data_pids.index(pid) + 1

    def replica_pid(self, index: int) -> str:
        return self.data_pids[index - 1]

    def invoke(self, op_id: int, op: str, arg: bytes | None) -> None:
        raise NotImplementedError

    def respond(self, op_id: int, ret: Any) -> None:
        self.record("op", event="response", op_id=op_id, ret=ret)

    def annotate(self, op_id: int, **ann: Any) -> None:
        self.record("op", event="annotate", op_id=op_id, **ann)


class WriterClient(ClientBase):
    def __init__(self, *args: Any, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.ctx: WriteContext | None = None

    def invoke(self, op_id: int, op: str, arg: bytes | None) -> None:
        if op != "write" or arg is None:
            raise HarnessError(f"writer {self.pid} got invocation {op!r}")
        if self.ctx is not None:
            raise HarnessError(f"writer {self.pid} already has an operation in flight")
        ctx = WriteContext(op_id=op_id, value=arg)
        self.ctx = ctx
        self.driver.tsread(lambda ts, md, ctx=ctx: self._dir_read_done(ctx, ts, md))

    def _dir_read_done(self, ctx: WriteContext, ts: Timestamp, md: Metadata | None) -> None:
        if self.ctx is not ctx or ctx.phase is not WritePhase.READ_DIR:
            return
        ctx.ts = ts.next_for(self.cid)
        ctx.phase = WritePhase.WRITE_HASH
        self.annotate(ctx.op_id, ts=ctx.ts)
        digest = self.digests.digest(ctx.value)
        self.driver.hash_write(ctx.ts, digest, lambda ctx=ctx: self._hash_written(ctx))

    def _hash_written(self, ctx: WriteContext) -> None:
        if self.ctx is not ctx or ctx.phase is not WritePhase.WRITE_HASH:
            return
        ctx.phase = WritePhase.WRITE_DATA
        for pid in self.data_pids:
            self.send(MsgKind.WRITE, pid, ts=ctx.ts, val=ctx.value)

    def on_message(self, msg: Message) -> None:
        if self.driver.handle(msg):
            return
        if msg.kind is MsgKind.WRITE_ACK:
            self._on_write_ack(msg)

    def _on_write_ack(self, msg: Message) -> None:
        ctx = self.ctx
        if ctx is None or ctx.phase is not WritePhase.WRITE_DATA:
            return
        if msg["ts"] != ctx.ts or msg.src not in self.data_pids:
            return  # ack for some other write, or from a stranger
        ctx.acks.add(self.replica_index(msg.src))
        if len(ctx.acks) >= self.t + 1:
            ctx.phase = WritePhase.WRITE_DIR
            md = Metadata(ts=ctx.ts, replicas=frozenset(ctx.acks))
            self.driver.tswrite(md, lambda ctx=ctx: self._dir_written(ctx))

    def _dir_written(self, ctx: WriteContext) -> None:
        if self.ctx is not ctx or ctx.phase is not WritePhase.WRITE_DIR:
            return
        ctx.phase = WritePhase.COMMIT
        for pid in self.data_pids:
            self.send(MsgKind.COMMIT, pid, ts=ctx.ts)
        self.ctx = None
        self.respond(ctx.op_id, "OK")

    def final_state(self) -> dict:
        if self.ctx is None:
            return {"idle": True}
        return {"idle": False, "phase": self.ctx.phase.value, "ts": self.ctx.ts}


class ReaderClient(ClientBase):
    def __init__(self, *args: Any, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.ctx: ReadContext | None = None

    def invoke(self, op_id: int, op: str, arg: bytes | None) -> None:
        if op != "read":
            raise HarnessError(f"reader {self.pid} got invocation {op!r}")
        if self.ctx is not None:
            raise HarnessError(f"reader {self.pid} already has an operation in flight")
        ctx = ReadContext(op_id=op_id)
        self.ctx = ctx
        self.driver.tsread(lambda ts, md, ctx=ctx: self._dir_read_done(ctx, ts, md))

    def _dir_read_done(self, ctx: ReadContext, ts: Timestamp, md: Metadata | None) -> None:
        if self.ctx is not ctx or ctx.md is not None:
            return
        if md is None:
            # Nothing written yet: return the absent value.
            self.annotate(ctx.op_id, ts=TS_INIT, md_ts=ts)
            self.ctx = None
            self.respond(ctx.op_id, None)
            return
        ctx.md = md
        self.annotate(ctx.op_id, md_ts=md.ts)
        for index in sorted(md.replicas):
            self.send(MsgKind.READ, self.replica_pid(index), ts=md.ts)

    def on_message(self, msg: Message) -> None:
        if self.driver.handle(msg):
            return
        if msg.kind is MsgKind.READ_VAL:
            self._on_read_val(msg)

    def _on_read_val(self, msg: Message) -> None:
        ctx = self.ctx
        if ctx is None or ctx.md is None or ctx.readval is not None:
            return
        ts: Timestamp = msg["ts"]
        val = msg["val"]
        if ts == ctx.md.ts:
            self._check(ctx, ts, val, md2_ts=None)
        elif ts > ctx.md.ts:
            # The replica is ahead of the directory record we hold. Re-read
            # the directory once for this reply; accept only if it caught up.
            self.driver.tsread(
                lambda ts2, md2, ctx=ctx, ts=ts, val=val: self._revalidate(ctx, ts, val, ts2, md2)
            )
        else:
            self.trace_note("readval-below-directory", ts=ts, src=msg.src)

    def _revalidate(
        self,
        ctx: ReadContext,
        ts: Timestamp,
        val: bytes | None,
        dir_ts: Timestamp,
        md2: Metadata | None,
    ) -> None:
        if self.ctx is not ctx or ctx.readval is not None:
            return
        if md2 is not None and md2.ts >= ts:
            self._check(ctx, ts, val, md2_ts=md2.ts)
        else:
            self.trace_note("readval-discarded", ts=ts, dir_ts=dir_ts)

    def _check(
        self, ctx: ReadContext, ts: Timestamp, val: bytes | None, md2_ts: Timestamp | None
    ) -> None:
        if val is None:
            self.trace_note("readval-absent-value", ts=ts)
            return
        self.driver.hash_read(
            ts,
            lambda digest, ctx=ctx, ts=ts, val=val, md2_ts=md2_ts: self._check_done(
                ctx, ts, val, md2_ts, digest
            ),
        )

    def _check_done(
        self,
        ctx: ReadContext,
        ts: Timestamp,
        val: bytes,
        md2_ts: Timestamp | None,
        digest: str | None,
    ) -> None:
        if self.ctx is not ctx or ctx.readval is not None:
            return
        if digest is None or digest != self.digests.digest(val):
            self.trace_note("digest-check-failed", ts=ts)
            return
        ctx.readval = TaggedValue(ts=ts, val=val)
        ann: dict[str, Any] = {"ts": ts}
        if md2_ts is not None:
            ann["md2_ts"] = md2_ts
        self.annotate(ctx.op_id, **ann)
        self.ctx = None
        self.respond(ctx.op_id, val)

    def final_state(self) -> dict:
        if self.ctx is None:
            return {"idle": True}
        return {"idle": False, "md_ts": None if self.ctx.md is None else self.ctx.md.ts}
