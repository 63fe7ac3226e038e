"""Deterministic discrete-event simulator for the protocol.

One event fires per step: a message delivery, a client invocation, a
crash, or an adversary action. The default scheduler picks uniformly at
random (seeded) among pending events, with a bounded-fairness override:
any event older than the fairness window is delivered first, oldest
first, so every message between correct processes lands within a bounded
number of steps. Scenario scripts bypass the random scheduler and pick
events by pattern, which is how the proof-style executions with their
precise delays and starved channels are reproduced.

Crashes are permanent. A crashed process handles nothing from its crash
step on; messages addressed to it are dropped, while messages it already
sent stay in flight (the network does not forget). Step indices exist
only in traces and the checker; no protocol handler ever sees one.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field
from typing import Any, Callable

from .client import ClientBase, ReaderClient, WriterClient
from .faults import (
    ByzReaderProbe,
    ByzSpec,
    CrashSpec,
    make_data_replica,
    make_meta_replica,
)
from .history import DirOpRecord, OpRecord, assemble_dir_ops
from .mds_oracle import DIR_PID, HASH_PID, DirectoryOracle, HashArrayOracle, OracleMdsDriver
from .mds_replicated import ReplicatedMdsDriver
from .net import Delivery, Message, MsgKind, Port, Process, render_field
from .types import ConfigError, DigestFacility, HarnessError, HashMode, render_value

DEFAULT_BUDGET = 10_000
DEFAULT_MAX_STEPS = 50_000
DEFAULT_FAIRNESS = 64


@dataclass
class AdversaryAction:
    step: int
    process: str
    action: str
    params: dict = dc_field(default_factory=dict)


@dataclass
class Config:
    t: int = 1
    tm: int = 1
    writers: int = 2
    readers: int = 2
    d: int | None = None
    m: int | None = None
    seed: Any = 0
    hash_mode: HashMode = HashMode.PRODUCTION
    mds_mode: str = "oracle"
    ops: int = 3
    alphabet: tuple[bytes, ...] = (b"a", b"b", b"c", b"d")
    fairness: int = DEFAULT_FAIRNESS
    budget: int = DEFAULT_BUDGET
    max_steps: int = DEFAULT_MAX_STEPS
    fifo: bool = False
    byz_data: dict = dc_field(default_factory=dict)  # pid -> ByzSpec
    byz_meta: dict = dc_field(default_factory=dict)  # pid -> ByzSpec
    crashes: tuple = ()  # CrashSpec, ...
    adversary: tuple = ()  # AdversaryAction, ... (random-schedule runs)
    probes: tuple = ()  # extra Byzantine client pids
    lower_bound: bool = False
    workload: dict | None = None  # pid -> [("WRITE", bytes) | ("READ", None)]

    def __post_init__(self) -> None:
        if isinstance(self.hash_mode, str):
            self.hash_mode = HashMode(self.hash_mode)

    @property
    def data_count(self) -> int:
        return self.d if self.d is not None else 2 * self.t + 1

    @property
    def meta_count(self) -> int:
        return self.m if self.m is not None else 3 * self.tm + 1

    def validate(self) -> None:
        if self.t < 0 or self.tm < 0:
            raise ConfigError("fault thresholds must be non-negative")
        if self.writers < 0 or self.readers < 0 or self.ops < 0:
            raise ConfigError("process and operation counts must be non-negative")
        if self.data_count < 1 or self.meta_count < 1:
            raise ConfigError("need at least one data and one metadata replica")
        if self.mds_mode not in ("oracle", "replicated"):
            raise ConfigError(f"unknown mds mode {self.mds_mode!r}")
        if not self.lower_bound:
            if self.data_count != 2 * self.t + 1:
                raise ConfigError(
                    f"D={self.data_count} breaks the 2t+1 plan; "
                    "set lower_bound for deliberate under-provisioning"
                )
            if self.meta_count != 3 * self.tm + 1:
                raise ConfigError(
                    f"M={self.meta_count} breaks the 3t_M+1 plan; "
                    "set lower_bound for deliberate under-provisioning"
                )
            if len(self.byz_data) > self.t:
                raise ConfigError("more Byzantine data replicas than t")
            if len(self.byz_meta) > self.tm:
                raise ConfigError("more Byzantine metadata replicas than t_M")
        data_pids = set(self.data_pids())
        meta_pids = set(self.meta_pids())
        for pid in self.byz_data:
            if pid not in data_pids:
                raise ConfigError(f"Byzantine assignment to unknown data replica {pid!r}")
        for pid in self.byz_meta:
            if pid not in meta_pids:
                raise ConfigError(f"Byzantine assignment to unknown metadata replica {pid!r}")
        if self.byz_meta and self.mds_mode != "replicated":
            raise ConfigError("Byzantine metadata replicas require replicated mds mode")
        faulty = set(self.byz_data) | set(self.byz_meta)
        for spec in self.crashes:
            if spec.process in faulty:
                raise ConfigError(f"crash target {spec.process!r} is already Byzantine")

    def writer_pids(self) -> list[str]:
        return [f"w{i + 1}" for i in range(self.writers)]

    def reader_pids(self) -> list[str]:
        return [f"r{i + 1}" for i in range(self.readers)]

    def data_pids(self) -> list[str]:
        return [f"d{i + 1}" for i in range(self.data_count)]

    def meta_pids(self) -> list[str]:
        return [f"m{i + 1}" for i in range(self.meta_count)]

    def client_ids(self) -> dict[str, int]:
        ids: dict[str, int] = {}
        for i, pid in enumerate(self.writer_pids()):
            ids[pid] = i + 1
        for j, pid in enumerate(self.reader_pids()):
            ids[pid] = self.writers + j + 1
        return ids

    def render(self) -> dict:
        return {
            "t": self.t,
            "tm": self.tm,
            "writers": self.writers,
            "readers": self.readers,
            "d": self.data_count,
            "m": self.meta_count,
            "seed": self.seed,
            "hash_mode": self.hash_mode.value,
            "mds_mode": self.mds_mode,
            "ops": self.ops,
            "fairness": self.fairness,
            "budget": self.budget,
            "max_steps": self.max_steps,
            "fifo": self.fifo,
            "byz_data": {p: s.strategy.value for p, s in sorted(self.byz_data.items())},
            "byz_meta": {p: s.strategy.value for p, s in sorted(self.byz_meta.items())},
            "crashes": [
                {"process": c.process, "at_step": c.at_step,
                 "after_ops": c.after_ops, "at_phase": c.at_phase}
                for c in self.crashes
            ],
            "lower_bound": self.lower_bound,
        }


@dataclass
class World:
    config: Config
    processes: dict[str, Process]
    clients: dict[str, ClientBase]
    digests: DigestFacility
    workload: dict[str, list[tuple[str, bytes | None]]]


def default_workload(config: Config) -> dict[str, list[tuple[str, bytes | None]]]:
    rng = random.Random(f"{config.seed}|workload")
    plan: dict[str, list[tuple[str, bytes | None]]] = {}
    for pid in config.writer_pids():
        plan[pid] = [("WRITE", rng.choice(config.alphabet)) for _ in range(config.ops)]
    for pid in config.reader_pids():
        plan[pid] = [("READ", None)] * config.ops
    return plan


def build_world(config: Config) -> World:
    config.validate()
    digests = DigestFacility(config.hash_mode)
    client_ids = config.client_ids()
    writer_pids = frozenset(config.writer_pids())
    writer_cids = [client_ids[p] for p in config.writer_pids()]
    data_pids = config.data_pids()

    processes: dict[str, Process] = {}
    for pid in data_pids:
        processes[pid] = make_data_replica(pid, writer_pids, config.byz_data.get(pid))

    if config.mds_mode == "oracle":
        processes[DIR_PID] = DirectoryOracle(DIR_PID, client_ids, writer_pids)
        processes[HASH_PID] = HashArrayOracle(HASH_PID, client_ids)
    else:
        meta_pids = config.meta_pids()
        for pid in meta_pids:
            processes[pid] = make_meta_replica(
                pid, meta_pids, config.tm, client_ids, writer_cids,
                config.byz_meta.get(pid),
            )

    clients: dict[str, ClientBase] = {}
    for pid in config.writer_pids():
        client = WriterClient(pid, client_ids[pid], digests, data_pids, config.t)
        clients[pid] = client
    for pid in config.reader_pids():
        client = ReaderClient(pid, client_ids[pid], digests, data_pids, config.t)
        clients[pid] = client
    for pid, client in clients.items():
        if config.mds_mode == "oracle":
            driver = OracleMdsDriver(client, DIR_PID, HASH_PID)
        else:
            driver = ReplicatedMdsDriver(
                client, config.meta_pids(), config.tm, writer_cids, client.cid
            )
        client.attach_driver(driver)
        processes[pid] = client

    for pid in config.probes:
        processes[pid] = ByzReaderProbe(pid)

    workload = config.workload if config.workload is not None else default_workload(config)
    for pid in workload:
        if pid not in clients:
            raise ConfigError(f"workload names unknown client {pid!r}")
    return World(config, processes, clients, digests, workload)


@dataclass
class RunResult:
    config: Config
    steps: int
    quiescent: bool
    trace: list[dict]
    history: list[OpRecord]
    dir_ops: list[DirOpRecord]
    final_states: dict[str, dict]
    crashed: set[str]
    collisions: list[tuple[str, str, str]]

    def latencies(self) -> dict[int, int | None]:
        return {
            op.op_id: (op.response - op.invoke if op.complete else None)
            for op in self.history
        }

    def incomplete_ops(self, include_crashed: bool = False) -> list[OpRecord]:
        out = []
        for op in self.history:
            if op.complete:
                continue
            if not include_crashed and op.client in self.crashed:
                continue
            out.append(op)
        return out


class Simulation:
    """Event loop, trace recorder, and fault injector for one run."""

    def __init__(self, world: World):
        self.world = world
        self.config = world.config
        self.rng = random.Random(f"{self.config.seed}|sched")
        self.step = 0
        self.seq = 0
        self.pending: dict[int, Delivery] = {}
        self.chan_order: dict[tuple[str, str], list[int]] = {}
        self.trace: list[dict] = []
        self.crashed: set[str] = set()
        self.ops: dict[int, OpRecord] = {}
        self.mds_entries: list[dict] = []
        self.op_seq = 0
        self.queues: dict[str, list[tuple[str, bytes | None]]] = {
            pid: list(ops) for pid, ops in world.workload.items()
        }
        self.active_op: dict[str, int] = {}
        self.completed_ops: dict[str, int] = {pid: 0 for pid in world.clients}
        self._crash_requests: list[str] = []
        port = Port(self._send, self._trace_note, self._record)
        for proc in world.processes.values():
            proc.port = port

    # -- port callbacks -----------------------------------------------------

    def _send(self, msg: Message) -> None:
        if msg.dst not in self.world.processes:
            raise HarnessError(f"message to unknown process {msg.dst!r}")
        if msg.src in self.crashed:
            return
        if msg.dst in self.crashed:
            self._trace("drop", reason="destination-crashed", msg=msg.render())
            return
        self.seq += 1
        self.pending[self.seq] = Delivery(
            seq=self.seq, kind="deliver", created_step=self.step, msg=msg
        )
        self.chan_order.setdefault((msg.src, msg.dst), []).append(self.seq)
        self._trace("send", msg=msg.render())

    def _trace_note(self, proc: str, note: str, **payload: Any) -> None:
        self._trace("note", proc=proc, note=note,
                    **{k: render_field(v) for k, v in payload.items()})

    def _record(self, channel: str, **entry: Any) -> None:
        entry = dict(entry)
        entry["step"] = self.step
        if channel == "mds":
            self.mds_entries.append(entry)
            return
        if channel != "op":
            raise HarnessError(f"unknown record channel {channel!r}")
        if entry["event"] == "response":
            op = self.ops[entry["op_id"]]
            op.response = self.step
            op.ret = entry["ret"]
            pid = op.client
            self.active_op.pop(pid, None)
            self.completed_ops[pid] += 1
            self._trace("response", op_id=op.op_id, client=pid,
                        ret=render_value(op.ret) if isinstance(op.ret, bytes) else op.ret)
            self._after_completion(pid)
        elif entry["event"] == "annotate":
            op = self.ops[entry["op_id"]]
            for key in ("ts", "md_ts", "md2_ts"):
                if key in entry:
                    setattr(op, key, entry[key])
        else:
            raise HarnessError(f"unknown op event {entry['event']!r}")

    # -- fault machinery ----------------------------------------------------

    def crash(self, pid: str) -> None:
        if pid in self.crashed:
            return
        if pid not in self.world.processes:
            raise ConfigError(f"crash target {pid!r} does not exist")
        self.crashed.add(pid)
        self._trace("crash", proc=pid)
        for seq, delivery in sorted(self.pending.items()):
            drop = False
            if delivery.msg is not None and delivery.msg.dst == pid:
                drop = True
            if delivery.kind == "invoke" and delivery.payload.get("pid") == pid:
                drop = True
            if drop:
                self._drop_pending(seq, reason="target-crashed")
        if pid in self.queues:
            self.queues[pid] = []

    def _drop_pending(self, seq: int, reason: str) -> None:
        delivery = self.pending.pop(seq)
        if delivery.msg is not None:
            order = self.chan_order.get((delivery.msg.src, delivery.msg.dst))
            if order and seq in order:
                order.remove(seq)
            self._trace("drop", reason=reason, msg=delivery.msg.render())
        else:
            self._trace("drop", reason=reason, kind=delivery.kind,
                        payload=dict(delivery.payload))

    def adversary(self, pid: str, action: str, params: dict) -> None:
        proc = self.world.processes.get(pid)
        if proc is None or not hasattr(proc, "apply_adversary"):
            raise ConfigError(f"adversary action targets non-Byzantine process {pid!r}")
        self._trace("adversary", proc=pid, action=action)
        proc.apply_adversary(action, params)

    def request_crash(self, pid: str) -> None:
        self._crash_requests.append(pid)

    def _run_crash_requests(self) -> None:
        while self._crash_requests:
            self.crash(self._crash_requests.pop(0))

    def _check_phase_crashes(self) -> None:
        for spec in self.config.crashes:
            if spec.at_phase is None or spec.process in self.crashed:
                continue
            client = self.world.clients.get(spec.process)
            ctx = getattr(client, "ctx", None)
            if ctx is not None and ctx.phase.value == spec.at_phase:
                self.request_crash(spec.process)

    def _check_completion_crashes(self, pid: str) -> None:
        for spec in self.config.crashes:
            if spec.process != pid or spec.after_ops is None:
                continue
            if pid not in self.crashed and self.completed_ops[pid] >= spec.after_ops:
                self.request_crash(pid)

    # -- operations ---------------------------------------------------------

    def enqueue_invoke(self, pid: str) -> None:
        self.seq += 1
        self.pending[self.seq] = Delivery(
            seq=self.seq, kind="invoke", created_step=self.step, payload={"pid": pid}
        )

    def _after_completion(self, pid: str) -> None:
        self._check_completion_crashes(pid)
        if self.queues.get(pid) and pid not in self.crashed:
            self.enqueue_invoke(pid)

    def invoke_next(self, pid: str) -> int:
        queue = self.queues[pid]
        if not queue:
            raise HarnessError(f"no queued operations left for {pid!r}")
        kind, arg = queue.pop(0)
        self.op_seq += 1
        op = OpRecord(op_id=self.op_seq, client=pid, kind=kind, arg=arg, invoke=self.step)
        self.ops[op.op_id] = op
        self.active_op[pid] = op.op_id
        self._trace("invoke", op_id=op.op_id, client=pid, kind=kind,
                    arg=render_value(arg) if arg is not None else None)
        client = self.world.clients[pid]
        client.invoke(op.op_id, kind.lower(), arg)
        return op.op_id

    # -- event dispatch -----------------------------------------------------

    def _trace(self, ev: str, **payload: Any) -> None:
        entry = {"step": self.step, "ev": ev}
        entry.update(payload)
        self.trace.append(entry)

    def dispatch(self, delivery: Delivery) -> None:
        if delivery.kind == "invoke":
            pid = delivery.payload["pid"]
            if pid in self.crashed:
                return
            self.invoke_next(pid)
        elif delivery.kind == "deliver":
            msg = delivery.msg
            order = self.chan_order.get((msg.src, msg.dst))
            if order and delivery.seq in order:
                order.remove(delivery.seq)
            if msg.dst in self.crashed:
                self._trace("drop", reason="destination-crashed", msg=msg.render())
                return
            self._trace("deliver", msg=msg.render())
            self.world.processes[msg.dst].on_message(msg)
        else:
            raise HarnessError(f"cannot dispatch event kind {delivery.kind!r}")
        self._check_phase_crashes()
        self._run_crash_requests()

    # -- random-schedule loop -----------------------------------------------

    def _eligible(self, delivery: Delivery) -> bool:
        if delivery.msg is None or not self.config.fifo:
            return True
        order = self.chan_order[(delivery.msg.src, delivery.msg.dst)]
        return bool(order) and order[0] == delivery.seq

    def _choose(self) -> Delivery | None:
        eligible = [d for _, d in sorted(self.pending.items()) if self._eligible(d)]
        if not eligible:
            return None
        overdue = [
            d for d in eligible
            if self.step - d.created_step >= self.config.fairness
        ]
        if overdue:
            return overdue[0]
        return self.rng.choice(eligible)

    def _fire_scheduled_faults(self) -> None:
        for spec in self.config.crashes:
            if spec.at_step is not None and spec.at_step <= self.step:
                if spec.process not in self.crashed:
                    self.crash(spec.process)
        for act in self.config.adversary:
            if act.step == self.step:
                self.adversary(act.process, act.action, act.params)

    def run(self) -> RunResult:
        for pid in sorted(self.queues):
            if self.queues[pid]:
                self.enqueue_invoke(pid)
        quiescent = False
        while self.step < self.config.max_steps:
            self._fire_scheduled_faults()
            delivery = self._choose()
            if delivery is None:
                quiescent = True
                break
            del self.pending[delivery.seq]
            self.dispatch(delivery)
            self.step += 1
        return self.finish(quiescent)

    # -- wrap-up ------------------------------------------------------------

    def finish(self, quiescent: bool) -> RunResult:
        for seq in sorted(self.pending):
            delivery = self.pending[seq]
            if delivery.msg is not None:
                self._trace("undelivered", msg=delivery.msg.render())
            else:
                self._trace("undelivered", kind=delivery.kind,
                            payload=dict(delivery.payload))
        final_states = {}
        for pid, proc in sorted(self.world.processes.items()):
            state = render_field(proc.final_state())
            final_states[pid] = state
            self._trace("final", proc=pid, crashed=pid in self.crashed, state=state)
        history = sorted(self.ops.values(), key=lambda op: (op.invoke, op.op_id))
        return RunResult(
            config=self.config,
            steps=self.step,
            quiescent=quiescent,
            trace=self.trace,
            history=history,
            dir_ops=assemble_dir_ops(self.mds_entries),
            final_states=final_states,
            crashed=set(self.crashed),
            collisions=list(self.world.digests.collisions),
        )


# -- scripted schedules ------------------------------------------------------


@dataclass(frozen=True)
class Match:
    """Pattern over pending message deliveries."""
    kind: MsgKind | None = None
    src: str | None = None
    dst: str | None = None

    def covers(self, msg: Message) -> bool:
        if self.kind is not None and msg.kind is not self.kind:
            return False
        if self.src is not None and msg.src != self.src:
            return False
        if self.dst is not None and msg.dst != self.dst:
            return False
        return True


class Script:
    """Driver for proof-style schedules: deliver by pattern, starve the rest."""

    def __init__(self, sim: Simulation):
        self.sim = sim

    def _matching(self, match: Match) -> list[int]:
        return [
            seq for seq, d in sorted(self.sim.pending.items())
            if d.msg is not None and match.covers(d.msg) and self.sim._eligible(d)
        ]

    def invoke(self, pid: str) -> int:
        op_id = self.sim.invoke_next(pid)
        self.sim.step += 1
        return op_id

    def deliver(self, match: Match, count: int | None = 1) -> int:
        """Deliver the oldest `count` matching messages (all if count=None)."""
        delivered = 0
        while count is None or delivered < count:
            seqs = self._matching(match)
            if not seqs:
                break
            delivery = self.sim.pending.pop(seqs[0])
            self.sim.dispatch(delivery)
            self.sim.step += 1
            delivered += 1
        if count is not None and delivered < count:
            raise HarnessError(
                f"script expected {count} deliveries matching {match}, got {delivered}"
            )
        return delivered

    def drain(self, *starve: Match) -> int:
        """Deliver everything except messages matching a starve pattern."""
        delivered = 0
        while True:
            candidates = [
                seq for seq, d in sorted(self.sim.pending.items())
                if (d.msg is None or not any(m.covers(d.msg) for m in starve))
                and self.sim._eligible(d)
            ]
            if not candidates:
                return delivered
            delivery = self.sim.pending.pop(candidates[0])
            self.sim.dispatch(delivery)
            self.sim.step += 1
            delivered += 1

    def crash(self, pid: str) -> None:
        self.sim.crash(pid)
        self.sim.step += 1

    def adversary(self, pid: str, action: str, params: dict | None = None) -> None:
        self.sim.adversary(pid, action, params or {})
        self.sim.step += 1


def run(config: Config, script: Callable[[Script, World], None] | None = None) -> RunResult:
    """Execute one simulation; `script` switches to a scripted schedule."""
    world = build_world(config)
    sim = Simulation(world)
    if script is None:
        return sim.run()
    script(Script(sim), world)
    return sim.finish(quiescent=not sim.pending)
