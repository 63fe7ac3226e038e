"""Replicated metadata service over 3*tm + 1 metadata replicas.

The directory becomes one single-writer register per writer client; a
directory read returns the highest pair across all of them. The digest
array reuses the same register machinery with write-once usage.

Register replication works as follows. A client stores a (key, payload)
pair by sending it to every replica. A correct replica that accepts a
pair echoes it to its peers, and marks the pair established once tm + 1
distinct replicas (itself included) have echoed the same pair; only then
does it acknowledge the storers. Establishment is contagious: the
echoes that establish a pair at one correct replica eventually establish
it at all of them, so every pair whose store completed (2*tm + 1 acks)
is eventually visible everywhere despite tm lying replicas, even when
the storing client crashed mid-broadcast.

A reader subscribes to all replicas and collects, per register, the
established pairs each replica reports plus each replica's current
(highest established) key. It accepts the highest candidate confirmed
by tm + 1 matching reports, but only returns once 2*tm + 1 replicas
have reported snapshots and, for every register, 2*tm + 1 replicas
report a current key at or below the accepted candidate; that rules out
missing a completed store, because a completed store keeps tm + 1
correct replicas at or above its key forever. Directory reads then
write the chosen pair back and wait for 2*tm + 1 acks before returning,
which is what makes reads atomic relative to each other. Digest-array
reads skip the write-back: their register is write-once and only safe
semantics are promised, so tm + 1 matching reports (or 2*tm + 1 empty
reports for an unwritten entry) settle the answer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

from .net import Message, MsgKind, Process
from .types import HarnessError, Metadata, Timestamp, TS_INIT

RegisterId = tuple  # ("dir", writer_cid) or ("hash", Timestamp)


class Pair(NamedTuple):
    key: Timestamp
    payload: Any


INITIAL_PAIR = Pair(TS_INIT, None)


def payload_token(payload: Any) -> str:
    """Stable ordering/equality token for pair payloads."""
    if payload is None:
        return ""
    if isinstance(payload, Metadata):
        return f"md:{payload.ts.render()}|{','.join(map(str, sorted(payload.replicas)))}"
    return f"raw:{payload!r}"


def pair_sort_key(pair: Pair) -> tuple:
    return (pair.key.key(), payload_token(pair.payload))


@dataclass
class _PairState:
    echoes: set[str] = field(default_factory=set)
    storers: set[tuple[str, int]] = field(default_factory=set)
    acked: set[tuple[str, int]] = field(default_factory=set)
    established: bool = False


@dataclass
class _Register:
    pairs: dict[Pair, _PairState] = field(default_factory=dict)
    established: set[Pair] = field(default_factory=set)
    current: Pair = INITIAL_PAIR
    # digest registers: the one digest stored over an authenticated channel
    authentic_payload: Any = None


class MetaReplica(Process):
    """One metadata replica: registers, echo dissemination, listeners."""

    def __init__(
        self,
        pid: str,
        peer_pids: list[str],
        tm: int,
        client_ids: dict[str, int],
        writer_cids: list[int],
    ):
        super().__init__(pid)
        self.peers = [p for p in peer_pids if p != pid]
        self.tm = tm
        self.client_ids = client_ids
        self.writer_cids = list(writer_cids)
        self.registers: dict[RegisterId, _Register] = {
            ("dir", cid): _Register() for cid in self.writer_cids
        }
        # (client pid, tag) -> scope: "dir" or ("hash", index)
        self.listeners: dict[tuple[str, int], Any] = {}

    # -- message handlers --------------------------------------------------

    def on_message(self, msg: Message) -> None:
        if msg.kind is MsgKind.META_STORE:
            self.on_store(msg)
        elif msg.kind is MsgKind.META_WRITEBACK:
            self.on_writeback(msg)
        elif msg.kind is MsgKind.META_ECHO:
            self.on_echo(msg)
        elif msg.kind is MsgKind.META_QUERY:
            self.on_query(msg)
        elif msg.kind is MsgKind.META_UNSUB:
            self.listeners.pop((msg.src, msg["tag"]), None)

    def register_for(self, reg: RegisterId) -> _Register:
        if reg not in self.registers:
            self.registers[reg] = _Register()
        return self.registers[reg]

    def on_store(self, msg: Message) -> None:
        reg: RegisterId = msg["reg"]
        if not self._store_allowed(reg, msg.src):
            self.trace_note("meta-store-rejected", src=msg.src, reg=reg)
            return
        if reg[0] == "hash":
            rs = self.register_for(reg)
            if rs.authentic_payload is None:
                rs.authentic_payload = msg["payload"]
            elif rs.authentic_payload != msg["payload"]:
                raise HarnessError(
                    f"digest register {reg[1].render()} rewritten with a different digest"
                )
        self._accept(reg, Pair(msg["key"], msg["payload"]), (msg.src, msg["seq"]))

    def on_writeback(self, msg: Message) -> None:
        # Write-backs republish a pair a reader confirmed; any client may
        # send them, which is sound only because clients here are benign.
        self._accept(msg["reg"], Pair(msg["key"], msg["payload"]), (msg.src, msg["seq"]))

    def _store_allowed(self, reg: RegisterId, src: str) -> bool:
        cid = self.client_ids.get(src)
        if cid is None:
            return False
        if reg[0] == "dir":
            return reg[1] == cid
        if reg[0] == "hash":
            return reg[1].cid == cid
        return False

    def _accept(self, reg: RegisterId, pair: Pair, storer: tuple[str, int]) -> None:
        rs = self.register_for(reg)
        st = rs.pairs.setdefault(pair, _PairState())
        st.storers.add(storer)
        if st.established:
            self._ack_storers(reg, pair, st)
            return
        self._echo(reg, pair, st)
        self._maybe_establish(reg, pair, st)

    def on_echo(self, msg: Message) -> None:
        reg: RegisterId = msg["reg"]
        pair = Pair(msg["key"], msg["payload"])
        rs = self.register_for(reg)
        st = rs.pairs.setdefault(pair, _PairState())
        st.echoes.add(msg.src)
        st.storers.update(tuple(s) for s in msg["storers"])
        if st.established:
            self._ack_storers(reg, pair, st)
        else:
            self._maybe_establish(reg, pair, st)

    def _echo(self, reg: RegisterId, pair: Pair, st: _PairState) -> None:
        if self.pid in st.echoes:
            return
        st.echoes.add(self.pid)
        storers = tuple(sorted(st.storers))
        for peer in self.peers:
            self.send(
                MsgKind.META_ECHO, peer,
                reg=reg, key=pair.key, payload=pair.payload, storers=storers,
            )

    def _maybe_establish(self, reg: RegisterId, pair: Pair, st: _PairState) -> None:
        if st.established or len(st.echoes) < self.tm + 1:
            return
        st.established = True
        rs = self.registers[reg]
        rs.established.add(pair)
        if pair_sort_key(pair) > pair_sort_key(rs.current):
            rs.current = pair
        # Pass the pair on even when we only learned it from echoes, so
        # that establishment spreads to every correct replica.
        self._echo(reg, pair, st)
        self._ack_storers(reg, pair, st)
        self._notify(reg, pair)

    def _ack_storers(self, reg: RegisterId, pair: Pair, st: _PairState) -> None:
        for storer in sorted(st.storers - st.acked):
            st.acked.add(storer)
            pid, seq = storer
            self.send(MsgKind.META_ACK, pid, reg=reg, key=pair.key, seq=seq)

    def _scope_covers(self, scope: Any, reg: RegisterId) -> bool:
        if scope == "dir":
            return reg[0] == "dir"
        return scope == reg

    def _notify(self, reg: RegisterId, pair: Pair) -> None:
        update = self._render_update(reg, (pair,))
        for (pid, tag), scope in sorted(self.listeners.items()):
            if self._scope_covers(scope, reg):
                self.send(MsgKind.META_UPDATE, pid, tag=tag, updates=(update,))

    def _render_update(self, reg: RegisterId, pairs: tuple[Pair, ...]) -> dict:
        rs = self.register_for(reg)
        return {
            "reg": reg,
            "pairs": tuple(sorted(pairs, key=pair_sort_key)),
            "current": rs.current.key,
        }

    def on_query(self, msg: Message) -> None:
        scope = msg["scope"]
        tag = msg["tag"]
        self.listeners[(msg.src, tag)] = scope
        if scope == "dir":
            regs = [("dir", cid) for cid in self.writer_cids]
        else:
            regs = [scope]
        updates = tuple(
            self._render_update(reg, tuple(self.register_for(reg).established))
            for reg in regs
        )
        self.send(MsgKind.META_UPDATE, msg.src, tag=tag, updates=updates)

    def final_state(self) -> dict:
        out = {}
        for reg, rs in sorted(self.registers.items(), key=lambda kv: str(kv[0])):
            name = f"{reg[0]}/{reg[1].render() if isinstance(reg[1], Timestamp) else reg[1]}"
            out[name] = {
                "current": rs.current.key,
                "established": [
                    {"key": p.key, "payload": p.payload}
                    for p in sorted(rs.established, key=pair_sort_key)
                ],
            }
        return out


@dataclass
class _StoreOp:
    seq: int
    reg: RegisterId
    key: Timestamp
    op: str  # "tswrite" | "hashwrite" | "writeback"
    tag: int | None  # recorded mds tag, None for write-backs
    done: Callable[[], None]
    acks: set[str] = field(default_factory=set)


@dataclass
class _ReadOp:
    tag: int
    scope: Any
    op: str  # "tsread" | "hashread"
    done: Callable[..., None]
    snapshots: set[str] = field(default_factory=set)
    reports: dict = field(default_factory=dict)  # reg -> pid -> set[Pair]
    currents: dict = field(default_factory=dict)  # reg -> pid -> Timestamp
    state: str = "collect"  # "collect" | "writeback"


class ReplicatedMdsDriver:
    """Client-side quorum logic for the replicated metadata service.

    Exposes the same tsread/tswrite/hash_read/hash_write interface as the
    oracle driver, so clients do not know which mode they run in.
    """

    def __init__(
        self,
        owner: Process,
        meta_pids: list[str],
        tm: int,
        writer_cids: list[int],
        cid: int,
    ):
        self.owner = owner
        self.meta_pids = list(meta_pids)
        self.tm = tm
        self.writer_cids = list(writer_cids)
        self.cid = cid
        self._seq = 0
        self._tag = 0
        self._stores: dict[int, _StoreOp] = {}
        self._reads: dict[int, _ReadOp] = {}

    @property
    def quorum(self) -> int:
        return 2 * self.tm + 1

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _next_tag(self) -> int:
        self._tag += 1
        return self._tag

    # -- store side ---------------------------------------------------------

    def _start_store(
        self,
        reg: RegisterId,
        key: Timestamp,
        payload: Any,
        op: str,
        tag: int | None,
        done: Callable[[], None],
    ) -> None:
        seq = self._next_seq()
        self._stores[seq] = _StoreOp(seq=seq, reg=reg, key=key, op=op, tag=tag, done=done)
        kind = MsgKind.META_WRITEBACK if op == "writeback" else MsgKind.META_STORE
        for pid in self.meta_pids:
            self.owner.send(kind, pid, reg=reg, key=key, payload=payload, seq=seq)

    def tswrite(self, md: Metadata, done: Callable[[], None]) -> None:
        tag = self._next_tag()
        self.owner.record(
            "mds", proc=self.owner.pid, op="tswrite", tag=tag, phase="start", ts=md.ts, md=md
        )
        def finish() -> None:
            self.owner.record("mds", proc=self.owner.pid, op="tswrite", tag=tag, phase="end")
            done()
        self._start_store(("dir", self.cid), md.ts, md, "tswrite", tag, finish)

    def hash_write(self, index: Timestamp, digest: str, done: Callable[[], None]) -> None:
        tag = self._next_tag()
        self.owner.record(
            "mds", proc=self.owner.pid, op="hashwrite", tag=tag, phase="start",
            index=index, digest=digest,
        )
        def finish() -> None:
            self.owner.record("mds", proc=self.owner.pid, op="hashwrite", tag=tag, phase="end")
            done()
        self._start_store(("hash", index), index, digest, "hashwrite", tag, finish)

    # -- read side ----------------------------------------------------------

    def tsread(self, done: Callable[[Timestamp, Metadata | None], None]) -> None:
        tag = self._next_tag()
        self.owner.record("mds", proc=self.owner.pid, op="tsread", tag=tag, phase="start")
        read = _ReadOp(tag=tag, scope="dir", op="tsread", done=done)
        self._reads[tag] = read
        for pid in self.meta_pids:
            self.owner.send(MsgKind.META_QUERY, pid, scope="dir", tag=tag)

    def hash_read(self, index: Timestamp, done: Callable[[str | None], None]) -> None:
        tag = self._next_tag()
        self.owner.record(
            "mds", proc=self.owner.pid, op="hashread", tag=tag, phase="start", index=index
        )
        read = _ReadOp(tag=tag, scope=("hash", index), op="hashread", done=done)
        self._reads[tag] = read
        for pid in self.meta_pids:
            self.owner.send(MsgKind.META_QUERY, pid, scope=("hash", index), tag=tag)

    # -- inbound ------------------------------------------------------------

    def handle(self, msg: Message) -> bool:
        if msg.kind is MsgKind.META_ACK:
            self._on_ack(msg)
            return True
        if msg.kind is MsgKind.META_UPDATE:
            self._on_update(msg)
            return True
        return False

    def _on_ack(self, msg: Message) -> None:
        store = self._stores.get(msg["seq"])
        if store is None or msg["key"] != store.key:
            return
        store.acks.add(msg.src)
        if len(store.acks) >= self.quorum:
            del self._stores[store.seq]
            store.done()

    def _on_update(self, msg: Message) -> None:
        read = self._reads.get(msg["tag"])
        if read is None:
            return
        read.snapshots.add(msg.src)
        for update in msg["updates"]:
            reg = update["reg"]
            pairs = read.reports.setdefault(reg, {}).setdefault(msg.src, set())
            for pair in update["pairs"]:
                pairs.add(Pair(pair[0], pair[1]))
            if update["current"] is not None:
                read.currents.setdefault(reg, {})[msg.src] = update["current"]
        if read.state == "collect":
            self._evaluate(read)

    # -- read evaluation ----------------------------------------------------

    def _confirmed(self, read: _ReadOp, reg: RegisterId) -> list[Pair]:
        counts: dict[Pair, int] = {}
        for pid in sorted(read.reports.get(reg, {})):
            for pair in read.reports[reg][pid]:
                counts[pair] = counts.get(pair, 0) + 1
        out = [pair for pair, n in counts.items() if n >= self.tm + 1]
        return out

    def _evaluate(self, read: _ReadOp) -> None:
        if len(read.snapshots) < self.quorum:
            return
        if read.op == "hashread":
            self._evaluate_hashread(read)
        else:
            self._evaluate_tsread(read)

    def _evaluate_hashread(self, read: _ReadOp) -> None:
        reg = read.scope
        confirmed = self._confirmed(read, reg)
        if confirmed:
            best = max(confirmed, key=pair_sort_key)
            self._finish_hashread(read, best.payload)
            return
        empties = sum(
            1 for pid in sorted(read.snapshots) if not read.reports.get(reg, {}).get(pid)
        )
        if empties >= self.quorum:
            self._finish_hashread(read, None)

    def _finish_hashread(self, read: _ReadOp, digest: str | None) -> None:
        del self._reads[read.tag]
        self._unsub(read.tag)
        self.owner.record(
            "mds", proc=self.owner.pid, op="hashread", tag=read.tag, phase="end", digest=digest
        )
        read.done(digest)

    def _evaluate_tsread(self, read: _ReadOp) -> None:
        best: Pair | None = None
        best_reg: RegisterId | None = None
        for cid in self.writer_cids:
            reg = ("dir", cid)
            confirmed = self._confirmed(read, reg)
            confirmed.append(INITIAL_PAIR)
            candidate = max(confirmed, key=pair_sort_key)
            evidence = sum(
                1
                for pid in sorted(read.currents.get(reg, {}))
                if read.currents[reg][pid] <= candidate.key
            )
            if evidence < self.quorum:
                return  # cannot yet rule out a higher completed store here
            if best is None or pair_sort_key(candidate) > pair_sort_key(best):
                best, best_reg = candidate, reg
        assert best is not None
        if best.key == TS_INIT:
            self._finish_tsread(read, INITIAL_PAIR)
            return
        read.state = "writeback"
        self._start_store(
            best_reg, best.key, best.payload, "writeback", None,
            lambda: self._finish_tsread(read, best),
        )

    def _finish_tsread(self, read: _ReadOp, pair: Pair) -> None:
        del self._reads[read.tag]
        self._unsub(read.tag)
        self.owner.record(
            "mds", proc=self.owner.pid, op="tsread", tag=read.tag, phase="end",
            ts=pair.key, md=pair.payload,
        )
        read.done(pair.key, pair.payload)

    def _unsub(self, tag: int) -> None:
        for pid in self.meta_pids:
            self.owner.send(MsgKind.META_UNSUB, pid, tag=tag)
