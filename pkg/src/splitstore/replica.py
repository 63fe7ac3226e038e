"""Data replica state machine.

A replica keeps a set of tagged values plus the timestamp of the newest
write it has seen committed. Writes ahead of the committed timestamp are
stored tentatively and acknowledged unconditionally; a commit advances
the committed timestamp and discards every older tagged value. Reads are
answered from the requested timestamp, bumped up to the committed one
when the request lags behind.
"""
from __future__ import annotations

from .net import Message, MsgKind, Process
from .types import HarnessError, Timestamp, TS_INIT


class DataReplica(Process):
    def __init__(self, pid: str, writer_pids: frozenset[str]):
        super().__init__(pid)
        self.writer_pids = writer_pids
        self.committed: Timestamp = TS_INIT
        self.data: dict[Timestamp, bytes] = {}

    # -- handlers ---------------------------------------------------------

    def on_message(self, msg: Message) -> None:
        if msg.kind is MsgKind.WRITE:
            self.on_write(msg)
        elif msg.kind is MsgKind.COMMIT:
            self.on_commit(msg)
        elif msg.kind is MsgKind.READ:
            self.on_read(msg)

    def on_write(self, msg: Message) -> None:
        if msg.src not in self.writer_pids:
            self.trace_note("write-rejected", src=msg.src)
            return
        ts: Timestamp = msg["ts"]
        val: bytes = msg["val"]
        if ts > self.committed:
            prior = self.data.get(ts)
            if prior is not None and prior != val:
                raise HarnessError(f"conflicting values for timestamp {ts.render()}")
            self.data[ts] = val
        # The ack is unconditional: a stale write is simply subsumed.
        self.send(MsgKind.WRITE_ACK, msg.src, ts=ts)

    def on_commit(self, msg: Message) -> None:
        if msg.src not in self.writer_pids:
            return
        ts: Timestamp = msg["ts"]
        if ts > self.committed and ts in self.data:
            self.committed = ts
            self.data = {t: v for t, v in self.data.items() if t >= ts}

    def on_read(self, msg: Message) -> None:
        ts: Timestamp = msg["ts"]
        if ts < self.committed:
            ts = self.committed
        if ts in self.data:
            self.send(MsgKind.READ_VAL, msg.src, ts=ts, val=self.data[ts])
        else:
            # No tagged value at the requested timestamp (the requester is
            # ahead of us or fabricated the timestamp): answer with the
            # committed pair instead of blocking. A fresh replica serves
            # the initial pair, whose absent value readers reject.
            self.send(
                MsgKind.READ_VAL, msg.src,
                ts=self.committed, val=self.data.get(self.committed),
            )

    # -- inspection -------------------------------------------------------

    def final_state(self) -> dict:
        return {
            "committed": self.committed,
            "data": [
                {"ts": t, "val": v} for t, v in sorted(self.data.items(), key=lambda kv: kv[0].key())
            ],
        }
