"""Adversary strategies and fault-plan types.

Byzantine processes are modeled as subclasses of the correct process that
replace selected handlers. Every strategy is reactive and deterministic:
outputs depend only on the process state and the inbound event, so runs
stay reproducible. STATE-SWITCH is the one scripted strategy; it swaps
replica state when the scheduler delivers an adversary action to it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

from .mds_replicated import MetaReplica, Pair
from .net import Message, MsgKind, Process
from .replica import DataReplica
from .types import ConfigError, Metadata, Timestamp, TS_INIT


class ByzStrategy(enum.Enum):
    STALE_CONCURRENT = "stale-concurrent"
    FABRICATE_HIGH_TS = "fabricate-high-ts"
    STATE_SWITCH = "state-switch"
    MUTE = "mute"
    EQUIVOCATE = "equivocate"

    @classmethod
    def parse(cls, name: str) -> "ByzStrategy":
        for strat in cls:
            if strat.value == name:
                return strat
        raise ConfigError(f"unknown Byzantine strategy {name!r}")


@dataclass(frozen=True)
class ByzSpec:
    strategy: ByzStrategy
    params: tuple = ()  # (key, value) pairs, kept hashable


@dataclass(frozen=True)
class CrashSpec:
    """When to crash a process: at a step, after N completed ops, or when a
    writer's in-flight operation first reaches a protocol phase."""
    process: str
    at_step: int | None = None
    after_ops: int | None = None
    at_phase: str | None = None


FABRICATED_CID = 99
JUNK_VALUE = b"\xde\xad"


class ByzDataReplica(DataReplica):
    """Data replica under an adversary strategy.

    WRITE/COMMIT handling stays correct for every strategy except MUTE;
    the strategies differ in how they answer READ. That keeps the
    adversary focused on the attacks the read path must survive (serving
    concurrent uncommitted pairs, inventing timestamps, equivocating, or
    swapping state) without also destroying the write path, which MUTE
    covers.
    """

    def __init__(self, pid: str, writer_pids: frozenset[str], spec: ByzSpec):
        super().__init__(pid, writer_pids)
        self.spec = spec
        self._flip = 0

    def on_message(self, msg: Message) -> None:
        if self.spec.strategy is ByzStrategy.MUTE:
            self.trace_note("byz-mute-drop", kind=msg.kind.value, src=msg.src)
            return
        super().on_message(msg)

    def on_read(self, msg: Message) -> None:
        strat = self.spec.strategy
        if strat is ByzStrategy.STALE_CONCURRENT:
            self._reply_max_pair(msg)
        elif strat is ByzStrategy.FABRICATE_HIGH_TS:
            fake = Timestamp(msg["ts"].num + 100, FABRICATED_CID)
            self.trace_note("byz-fabricate", ts=fake)
            self.send(MsgKind.READ_VAL, msg.src, ts=fake, val=JUNK_VALUE)
        elif strat is ByzStrategy.EQUIVOCATE:
            self._flip += 1
            if self._flip % 2 == 0:
                super().on_read(msg)
            else:
                self._reply_max_pair(msg)
        else:
            # STATE-SWITCH answers correctly from whatever its state is now.
            super().on_read(msg)

    def _reply_max_pair(self, msg: Message) -> None:
        if self.data:
            ts = max(self.data)
            self.trace_note("byz-stale-concurrent", ts=ts)
            self.send(MsgKind.READ_VAL, msg.src, ts=ts, val=self.data[ts])
        else:
            self.send(MsgKind.READ_VAL, msg.src, ts=self.committed, val=None)

    def apply_adversary(self, action: str, params: dict) -> None:
        if action == "swap-values":
            for ts, val in params["pairs"]:
                if ts in self.data:
                    self.trace_note("byz-state-switch", ts=ts)
                    self.data[ts] = val
        elif action == "corrupt-all":
            for ts in list(self.data):
                self.data[ts] = JUNK_VALUE
            self.trace_note("byz-state-switch", ts=self.committed)
        else:
            raise ConfigError(f"unknown adversary action {action!r} for {self.pid}")


class ByzMetaReplica(MetaReplica):
    """Metadata replica under an adversary strategy.

    MUTE drops everything. STALE keeps its internal state honest (so it
    cannot be blamed for breaking echo liveness) but reports only the
    initial, empty view and never pushes updates. FABRICATE-HIGH-TS adds
    an invented high pair to every directory report. EQUIVOCATE serves
    honest snapshots to even tags and fabricated ones to odd tags.
    STATE-SWITCH corrupts established payloads on an adversary action.
    """

    def __init__(
        self,
        pid: str,
        peer_pids: list[str],
        tm: int,
        client_ids: dict[str, int],
        writer_cids: list[int],
        spec: ByzSpec,
    ):
        super().__init__(pid, peer_pids, tm, client_ids, writer_cids)
        self.spec = spec
        self._scrambled: dict = {}

    def on_message(self, msg: Message) -> None:
        if self.spec.strategy is ByzStrategy.MUTE:
            self.trace_note("byz-mute-drop", kind=msg.kind.value, src=msg.src)
            return
        super().on_message(msg)

    def _fabricated_update(self, reg: tuple) -> dict:
        fake_ts = Timestamp(999, FABRICATED_CID)
        payload: Any
        if reg[0] == "dir":
            payload = Metadata(ts=fake_ts, replicas=frozenset({1}))
        else:
            payload = "00" * 32
        return {"reg": reg, "pairs": (Pair(fake_ts, payload),), "current": fake_ts}

    def _notify(self, reg: tuple, pair: Pair) -> None:
        strat = self.spec.strategy
        if strat is ByzStrategy.STALE_CONCURRENT:
            return  # stale: never push updates
        super()._notify(reg, pair)

    def on_query(self, msg: Message) -> None:
        strat = self.spec.strategy
        scope = msg["scope"]
        tag = msg["tag"]
        if strat is ByzStrategy.STALE_CONCURRENT:
            self.listeners[(msg.src, tag)] = scope
            regs = [("dir", cid) for cid in self.writer_cids] if scope == "dir" else [scope]
            updates = tuple(
                {"reg": reg, "pairs": (), "current": TS_INIT} for reg in regs
            )
            self.send(MsgKind.META_UPDATE, msg.src, tag=tag, updates=updates)
            return
        if strat is ByzStrategy.FABRICATE_HIGH_TS or (
            strat is ByzStrategy.EQUIVOCATE and tag % 2 == 1
        ):
            self.listeners[(msg.src, tag)] = scope
            regs = [("dir", cid) for cid in self.writer_cids] if scope == "dir" else [scope]
            updates = tuple(self._fabricated_update(reg) for reg in regs)
            self.send(MsgKind.META_UPDATE, msg.src, tag=tag, updates=updates)
            return
        super().on_query(msg)

    def apply_adversary(self, action: str, params: dict) -> None:
        if action != "scramble":
            raise ConfigError(f"unknown adversary action {action!r} for {self.pid}")
        fake_ts = Timestamp(998, FABRICATED_CID)
        for reg, rs in self.registers.items():
            scrambled = set()
            for pair in rs.established:
                if reg[0] == "dir" and pair.payload is not None:
                    scrambled.add(Pair(pair.key, Metadata(ts=fake_ts, replicas=frozenset({1}))))
                elif reg[0] == "hash" and pair.payload is not None:
                    scrambled.add(Pair(pair.key, "ff" * 32))
                else:
                    scrambled.add(pair)
            rs.established = scrambled
        self.trace_note("byz-state-switch")


class ByzReaderProbe(Process):
    """Byzantine client: an unrestricted message source.

    It has no workload and no history entries; scripted adversary actions
    make it emit arbitrary protocol messages toward replicas or the
    metadata service.
    """

    def on_message(self, msg: Message) -> None:
        self.trace_note("byz-probe-ignores", kind=msg.kind.value, src=msg.src)

    def apply_adversary(self, action: str, params: dict) -> None:
        if action != "send":
            raise ConfigError(f"unknown adversary action {action!r} for {self.pid}")
        kind = MsgKind(params["kind"])
        self.send(kind, params["dst"], **params.get("fields", {}))


def make_data_replica(
    pid: str, writer_pids: frozenset[str], spec: ByzSpec | None
) -> DataReplica:
    if spec is None:
        return DataReplica(pid, writer_pids)
    return ByzDataReplica(pid, writer_pids, spec)


def make_meta_replica(
    pid: str,
    peer_pids: list[str],
    tm: int,
    client_ids: dict[str, int],
    writer_cids: list[int],
    spec: ByzSpec | None,
) -> MetaReplica:
    if spec is None:
        return MetaReplica(pid, peer_pids, tm, client_ids, writer_cids)
    return ByzMetaReplica(pid, peer_pids, tm, client_ids, writer_cids, spec)
