"""Deterministic discrete-event network simulator.

Time is an integer count of microseconds.  Each directed actor pair draws
latencies from its own seeded stream, so adding traffic on one pair never
perturbs the samples seen by another, and two protocol variants that send the
same messages on a pair observe identical hop latencies.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, TextIO

Z99 = 2.3263478740408408  # standard normal 0.99 quantile


class Link(str, Enum):
    INTRANET = "intranet"
    INTERNET = "internet"


@dataclass(frozen=True)
class LatencyModel:
    """One-way latency distribution, parameters in microseconds.

    ``lognormal`` is fitted to a median and a 99th percentile; ``constant``
    always returns ``median_us``.
    """

    family: str = "lognormal"
    median_us: float = 500.0
    p99_us: float = 900.0

    def __post_init__(self) -> None:
        if self.family not in ("lognormal", "constant"):
            raise ValueError(f"unknown latency family {self.family!r}")
        if self.family == "lognormal" and not (0 < self.median_us < self.p99_us):
            raise ValueError("lognormal needs 0 < median < p99")
        if self.median_us < 0:
            raise ValueError("negative latency")

    @property
    def sigma(self) -> float:
        return math.log(self.p99_us / self.median_us) / Z99

    def sample(self, rng: random.Random) -> int:
        if self.family == "constant":
            return int(round(self.median_us))
        value = rng.lognormvariate(math.log(self.median_us), self.sigma)
        return max(1, int(round(value)))


INTRANET_DEFAULT = LatencyModel("lognormal", 500.0, 900.0)
INTERNET_DEFAULT = LatencyModel("lognormal", 60_000.0, 165_000.0)


def sample_latency(model: LatencyModel, rng: random.Random) -> int:
    return model.sample(rng)


@dataclass(frozen=True)
class Partition:
    """Severs whole link classes and/or specific actor pairs on ``[start, end)``."""

    start_us: int
    end_us: int
    links: frozenset = frozenset({Link.INTERNET})
    pairs: frozenset = frozenset()

    def severs(self, src: str, dst: str, link: Link, t: int) -> bool:
        if not (self.start_us <= t < self.end_us):
            return False
        return link in self.links or (src, dst) in self.pairs or (dst, src) in self.pairs


@dataclass
class NetConfig:
    intranet: LatencyModel = INTRANET_DEFAULT
    internet: LatencyModel = INTERNET_DEFAULT
    cold_start_us: int = 0
    drop_held: bool = False
    partitions: list[Partition] = field(default_factory=list)

    def model(self, link: Link) -> LatencyModel:
        return self.intranet if link is Link.INTRANET else self.internet


class Actor:
    """Base class for simulated processes; ``site`` groups actors on one LAN."""

    def __init__(self, name: str, site: str):
        self.name = name
        self.site = site
        self.sim: Optional[Simulator] = None

    def receive(self, src: str, msg: Any) -> None:
        raise NotImplementedError

    def send(self, dst: str, msg: Any, delay: int = 0) -> None:
        self.sim.send(self.name, dst, msg, delay)

    def timer(self, delay: int, msg: Any, daemon: bool = False) -> None:
        self.sim.timer(self.name, delay, msg, daemon)


def describe(msg: Any) -> str:
    detail = getattr(msg, "trace_detail", None)
    return detail() if callable(detail) else ""


def _stream_seed(seed: int, src: str, dst: str) -> int:
    digest = hashlib.sha256(f"{seed}|{src}|{dst}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Simulator:
    def __init__(self, config: Optional[NetConfig] = None, seed: int = 0, trace_messages: bool = True):
        self.config = config or NetConfig()
        self.seed = seed
        # with trace_messages off only state transitions are logged
        self.trace_messages = trace_messages
        self.now = 0
        self.actors: dict[str, Actor] = {}
        self.trace: list[str] = []
        self._queue: list[tuple[int, int, str, str, Any, bool]] = []
        self._seq = 0
        self._work = 0  # queued non-daemon events
        self._incarnation: dict[str, int] = {}
        self._streams: dict[tuple[str, str], random.Random] = {}
        self._last: dict[tuple[str, str], int] = {}
        self._contacted: set[tuple[str, str]] = set()
        self.held = 0
        self.dropped = 0
        self.delivered = 0

    # -- topology ----------------------------------------------------------

    def add(self, actor: Actor) -> Actor:
        if actor.name in self.actors:
            raise ValueError(f"duplicate actor {actor.name}")
        actor.sim = self
        self.actors[actor.name] = actor
        return actor

    def replace(self, actor: Actor) -> Actor:
        """Swap in a fresh actor under an existing name (restart).

        Messages and timers addressed to the previous incarnation are
        discarded on arrival; scheduled stimuli reach the new one.
        """
        actor.sim = self
        self.actors[actor.name] = actor
        self._incarnation[actor.name] = self._incarnation.get(actor.name, 0) + 1
        return actor

    def link(self, src: str, dst: str) -> Link:
        same = self.actors[src].site == self.actors[dst].site
        return Link.INTRANET if same else Link.INTERNET

    def add_partition(self, partition: Partition) -> None:
        self.config.partitions.append(partition)

    def severed(self, src: str, dst: str, t: int) -> Optional[Partition]:
        link = self.link(src, dst)
        for p in self.config.partitions:
            if p.severs(src, dst, link, t):
                return p
        return None

    def internet_down_during(self, start: int, end: int) -> bool:
        return any(
            Link.INTERNET in p.links and p.start_us <= end and start < p.end_us
            for p in self.config.partitions
        )

    def internet_heal_time(self, start: int, end: int) -> Optional[int]:
        """Latest heal time among internet partitions overlapping ``[start, end]``."""
        ends = [
            p.end_us for p in self.config.partitions
            if Link.INTERNET in p.links and p.start_us <= end and start < p.end_us
        ]
        return max(ends) if ends else None

    # -- scheduling --------------------------------------------------------

    def _push(self, at: int, src: str, dst: str, msg: Any, daemon: bool, bound: bool = True) -> None:
        if at < self.now:
            raise ValueError("cannot schedule into the past")
        self._seq += 1
        if not daemon:
            self._work += 1
        epoch = self._incarnation.get(dst, 0) if bound else None
        heapq.heappush(self._queue, (at, self._seq, src, dst, msg, daemon, epoch))

    def sample(self, src: str, dst: str) -> int:
        stream = self._streams.get((src, dst))
        if stream is None:
            stream = self._streams[(src, dst)] = random.Random(_stream_seed(self.seed, src, dst))
        latency = self.config.model(self.link(src, dst)).sample(stream)
        if (src, dst) not in self._contacted:
            self._contacted.add((src, dst))
            latency += self.config.cold_start_us
        return latency

    def send(self, src: str, dst: str, msg: Any, delay: int = 0) -> None:
        depart = self.now + delay
        latency = self.sample(src, dst)
        kind = "send"
        cut = self.severed(src, dst, depart)
        if cut is not None:
            if self.config.drop_held:
                self.dropped += 1
                self.log("drop", src, dst, msg, f"at={depart}")
                return
            self.held += 1
            kind = "hold"
            depart = cut.end_us
            # a later partition may still cover the heal instant
            while (cut := self.severed(src, dst, depart)) is not None:
                depart = cut.end_us
        arrive = max(depart + latency, self._last.get((src, dst), 0))
        self._last[(src, dst)] = arrive
        self.log(kind, src, dst, msg, f"at={depart} arrive={arrive}")
        self._push(arrive, src, dst, msg, False)

    def timer(self, actor: str, delay: int, msg: Any, daemon: bool = False) -> None:
        self._push(self.now + delay, actor, actor, msg, daemon)

    def schedule(self, at: int, dst: str, msg: Any) -> None:
        """External stimulus delivered to ``dst`` at absolute time ``at``."""
        self._push(at, dst, dst, msg, False, bound=False)

    def step(self) -> bool:
        if not self._queue:
            return False
        at, _, src, dst, msg, daemon, epoch = heapq.heappop(self._queue)
        if not daemon:
            self._work -= 1
        self.now = at
        if epoch is not None and epoch != self._incarnation.get(dst, 0):
            # the addressee restarted since this was sent
            if src != dst:
                self.dropped += 1
                self.log("stale", src, dst, msg)
            return True
        if src != dst:
            self.delivered += 1
            self.log("recv", src, dst, msg)
        self.actors[dst].receive(src, msg)
        return True

    def run_until_idle(self, until: Optional[int] = None) -> list[str]:
        """Process events until only daemon timers remain (or ``until``)."""
        while self._queue and self._work > 0:
            if until is not None and self._queue[0][0] > until:
                break
            self.step()
        return self.trace

    # -- trace -------------------------------------------------------------

    def log(self, kind: str, src: str, dst: str, msg: Any = None, extra: str = "") -> None:
        if not self.trace_messages:
            return
        name = "-" if msg is None else type(msg).__name__
        detail = describe(msg)
        if extra:
            detail = f"{detail} {extra}" if detail else extra
        self.trace.append(f"{self.now}\t{kind}\t{src}\t{dst}\t{name}\t{detail}")

    def state(self, actor: str, what: str, detail: str = "") -> None:
        self.trace.append(f"{self.now}\tstate\t{actor}\t-\t{what}\t{detail}")

    def write_trace(self, fp: TextIO) -> None:
        for line in self.trace:
            fp.write(line + "\n")


def parse_trace(lines: Iterable[str]) -> list[tuple[int, str, str, str, str, str]]:
    out = []
    for line in lines:
        if not line.strip() or line.startswith("#"):
            continue
        t, kind, src, dst, name, detail = line.rstrip("\n").split("\t", 5)
        out.append((int(t), kind, src, dst, name, detail))
    return out


def net_config_from(values: Mapping[str, str]) -> NetConfig:
    """Build a :class:`NetConfig` from flat ``key=value`` settings (ms units)."""

    def model(prefix: str, default: LatencyModel) -> LatencyModel:
        family = values.get(f"{prefix}.family", default.family)
        median = float(values.get(f"{prefix}.median_ms", default.median_us / 1000)) * 1000
        p99 = float(values.get(f"{prefix}.p99_ms", default.p99_us / 1000)) * 1000
        return LatencyModel(family, median, p99)

    partitions = []
    for spec in filter(None, (s.strip() for s in values.get("partitions", "").split(","))):
        start, end = spec.split(":")
        partitions.append(Partition(int(float(start) * 1000), int(float(end) * 1000)))
    return NetConfig(
        intranet=model("intranet", INTRANET_DEFAULT),
        internet=model("internet", INTERNET_DEFAULT),
        cold_start_us=int(float(values.get("cold_start_ms", 0)) * 1000),
        drop_held=values.get("drop_held", "false").lower() in ("1", "true", "yes"),
        partitions=partitions,
    )
