"""Benchmark harness: access-path latency, hierarchy vs flat roles, pub/sub delivery.

Latencies are integer microseconds of simulated time.  Reports are written as
a CSV of raw samples plus a plain-text summary whose figures can all be
recomputed from the CSV.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

from . import ledger as ledger_mod
from .actors import Deployment, StartRequest, Timings, quorum_size
from .hierarchy import DeviceTree
from .identity import PermType, Permission
from .ledger import PermissionGranted, PolicyModel, TrustUser
from .netsim import Actor, NetConfig, Partition, Simulator, net_config_from, parse_trace
from .workload import (
    PlacementSpec, TreeSpec, gen_population, gen_requests, gen_tree, place_controls,
)

EXPERIMENTS = ("fullpath", "shortcut_internet", "shortcut_intranet", "rdbac_vs_rbac", "pubsub_latency")
ACCESS_MODES = ("fullpath", "shortcut_internet", "shortcut_intranet")

# each access experiment is reported next to the mode it is compared against
COMPARATOR = {
    "fullpath": "shortcut_internet",
    "shortcut_internet": "fullpath",
    "shortcut_intranet": "shortcut_internet",
}


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    experiment: str = "fullpath"
    seed: int = 0
    runs: int = 500
    gap_us: int = 10_000_000
    n_validators: int = 4
    net: NetConfig = field(default_factory=NetConfig)
    timings: Timings = field(default_factory=Timings)
    internet_down: bool = False
    tree: TreeSpec = field(default_factory=lambda: TreeSpec(10, 20.0, 0, 100_000))
    mu: float = 0.6
    sigma: float = 0.1
    grid: tuple[int, ...] = (100, 1_000, 10_000)
    users: int = 10_000
    roles: int = 100
    requests: int = 10_000

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.runs < 0 or self.requests < 0:
            raise ConfigError("run counts must be non-negative")
        if self.n_validators < 1:
            raise ConfigError("need at least one validator")
        if any(n < 0 for n in self.grid):
            raise ConfigError("grid points must be non-negative")


_INT_KEYS = {"runs", "validators", "users", "roles", "requests", "tree.height", "tree.max_nodes"}
_FLOAT_KEYS = {
    "gap_ms", "hub_ms", "validator_ms", "device_ms", "endorse_timeout_ms", "client_timeout_ms",
    "sweep_ms", "tree.degree", "placement.mu", "placement.sigma",
}
_NET_KEYS = {
    "intranet.family", "intranet.median_ms", "intranet.p99_ms",
    "internet.family", "internet.median_ms", "internet.p99_ms",
    "cold_start_ms", "drop_held", "partitions",
}
_OTHER_KEYS = {"grid", "internet_down", "seed"}


def parse_settings(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` comments allowed."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[bench]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return dict(parser["bench"])


def config_from(values: dict[str, str], experiment: str, seed: Optional[int] = None) -> BenchConfig:
    unknown = set(values) - _INT_KEYS - _FLOAT_KEYS - _NET_KEYS - _OTHER_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        ints = {k: int(values[k]) for k in _INT_KEYS if k in values}
        floats = {k: float(values[k]) for k in _FLOAT_KEYS if k in values}
        net = net_config_from({k: values[k] for k in _NET_KEYS if k in values})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def us(key: str, default: int) -> int:
        return int(round(floats[key] * 1000)) if key in floats else default

    timings = Timings(
        hub_us=us("hub_ms", 1_000),
        validator_us=us("validator_ms", 1_000),
        device_us=us("device_ms", 200),
        endorse_timeout_us=us("endorse_timeout_ms", int(round(10 * net.internet.p99_us))),
        client_timeout_us=us("client_timeout_ms", 30_000_000),
        sweep_us=us("sweep_ms", 60_000_000),
    )
    if seed is None:
        seed = int(values.get("seed", 0))
    try:
        grid = tuple(int(x) for x in values.get("grid", "100,1000,10000").split(",") if x.strip())
        tree = TreeSpec(ints.get("tree.height", 10), floats.get("tree.degree", 20.0), seed,
                        ints.get("tree.max_nodes", 100_000))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return BenchConfig(
        experiment=experiment,
        seed=seed,
        runs=ints.get("runs", 500),
        gap_us=us("gap_ms", 10_000_000),
        n_validators=ints.get("validators", 4),
        net=net,
        timings=timings,
        internet_down=values.get("internet_down", "false").lower() in ("1", "true", "yes"),
        tree=tree,
        mu=floats.get("placement.mu", 0.6),
        sigma=floats.get("placement.sigma", 0.1),
        grid=grid,
        users=ints.get("users", 10_000),
        roles=ints.get("roles", 100),
        requests=ints.get("requests", 10_000),
    )


def load_config(path: Optional[str], experiment: str, seed: Optional[int] = None) -> BenchConfig:
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fp:
                text = fp.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    return config_from(parse_settings(text), experiment, seed)


# -- reports ---------------------------------------------------------------

def percentile(values: Iterable[int], q: float) -> int:
    """Nearest-rank percentile: the ceil(q*n/100)-th smallest value."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("percentile of an empty sample")
    rank = max(1, math.ceil(q * len(ordered) / 100))
    return ordered[rank - 1]


@dataclass(frozen=True)
class Sample:
    run_index: int
    mode: str
    latency_us: int
    outcome: str


@dataclass
class PercentileReport:
    name: str
    samples: list[Sample] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def modes(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.samples:
            seen.setdefault(s.mode, None)
        return list(seen)

    def latencies(self, mode: str) -> list[int]:
        return [s.latency_us for s in self.samples if s.mode == mode]

    def stats(self, mode: str) -> dict[str, Any]:
        xs = self.latencies(mode)
        if not xs:
            return {"count": 0}
        return {
            "count": len(xs),
            "p50_us": percentile(xs, 50),
            "p99_us": percentile(xs, 99),
            "mean_us": sum(xs) / len(xs),
        }

    def saving(self, mode: str, baseline: str, q: float) -> float:
        """Fractional reduction of ``mode`` relative to ``baseline`` at percentile ``q``."""
        return 1.0 - percentile(self.latencies(mode), q) / percentile(self.latencies(baseline), q)


CSV_HEADER = ("run_index", "mode", "latency_us", "outcome")


def report_csv(report: PercentileReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in report.samples:
        writer.writerow((s.run_index, s.mode, s.latency_us, s.outcome))
    return buf.getvalue()


def read_csv(text: str) -> list[Sample]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    return [Sample(int(r[0]), r[1], int(r[2]), r[3]) for r in rows[1:]]


def report_summary(report: PercentileReport) -> str:
    lines = [f"report {report.name}"]
    if not report.samples:
        lines.append("no samples (count=0)")
    for mode in report.modes():
        st = report.stats(mode)
        lines.append(
            f"mode={mode} count={st['count']} p50_us={st['p50_us']} p99_us={st['p99_us']} "
            f"mean_us={st['mean_us']:.1f}"
        )
    lines.extend(report.notes)
    return "\n".join(lines) + "\n"


def emit_report(report: PercentileReport, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for suffix, text in ((".csv", report_csv(report)), (".summary.txt", report_summary(report))):
        path = os.path.join(out_dir, report.name + suffix)
        with open(path, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)
        paths.append(path)
    return paths


@dataclass
class BenchResult:
    report: PercentileReport
    trace: list[str]
    ledgers: dict[str, ledger_mod.Ledger] = field(default_factory=dict)
    disagreements: int = 0

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)


# -- access-path experiments -----------------------------------------------

def run_access_mode(cfg: BenchConfig, mode: str) -> tuple[Deployment, list[Sample]]:
    """``cfg.runs`` sequential requests from a freshly started client each time."""
    if mode not in ACCESS_MODES:
        raise ConfigError(f"unknown access mode {mode!r}")
    net = replace(cfg.net, partitions=list(cfg.net.partitions))
    if cfg.internet_down:
        net.partitions.append(Partition(0, cfg.runs * cfg.gap_us + cfg.gap_us))
    dep = Deployment(seed=cfg.seed, net=net, n_validators=cfg.n_validators, timings=cfg.timings)
    dom = dep.add_domain(PolicyModel.DAC)
    dev = dep.add_device(dom, ("sv",))
    uid = dep.new_user()
    dep.submit(dom, PermissionGranted(Permission(uid, dev.did, PermType.READ, "sv")))
    if mode != "fullpath":
        dep.submit(dom, TrustUser(dom.domain, uid))
    intranet = mode == "shortcut_intranet"
    req = (uid, dev.did, PermType.READ, "sv")
    dep.add_client(dom, uid, "client", intranet)
    dep.sim.add(_Restarter(dep, dom, uid, intranet))
    for i in range(cfg.runs):
        start = (i + 1) * cfg.gap_us
        # only the client process restarts between requests; the restart is
        # queued first so it runs before the request at the same instant
        dep.sim.schedule(start, "_restart", i)
        dep.sim.schedule(start, "client", StartRequest(req, i))
    dep.run()
    by_tag = {o.tag: o for o in dep.outcomes}
    samples = []
    for i in range(cfg.runs):
        o = by_tag.get(i)
        samples.append(Sample(i, mode, o.latency if o else 0, o.status if o else "lost"))
    return dep, samples


class _Restarter(Actor):
    """Swaps in a fresh client (empty token cache) just before each request."""

    def __init__(self, dep: Deployment, dom, uid, intranet: bool):
        super().__init__("_restart", "control")
        self.dep, self.dom, self.uid, self.intranet = dep, dom, uid, intranet

    def receive(self, src: str, msg: Any) -> None:
        self.dep.add_client(self.dom, self.uid, "client", self.intranet)


def endorsement_waits(trace: Iterable[str]) -> dict[str, int]:
    """Per-round time the hub spent waiting for quorum endorsement on the full path."""
    begin: dict[str, int] = {}
    waits: dict[str, int] = {}
    for t, kind, actor, _, what, detail in parse_trace(trace):
        if kind != "state" or what not in ("endorse-wait-begin", "endorse-wait-end"):
            continue
        round, at = detail.split(" at=")
        if what == "endorse-wait-begin":
            begin[round] = int(at)
        else:
            waits[round] = int(at) - begin[round]
    return waits


def run_access_bench(cfg: BenchConfig) -> BenchResult:
    mode = cfg.experiment
    modes = (mode, COMPARATOR[mode])
    report = PercentileReport(mode)
    trace: list[str] = []
    ledgers = {}
    for m in modes:
        dep, samples = run_access_mode(cfg, m)
        report.samples.extend(samples)
        trace.append(f"# mode={m}")
        trace.extend(dep.sim.trace)
        ledgers[m] = dep.ledger
    failed = {m: sum(1 for s in report.samples if s.mode == m and s.outcome != "connected") for m in modes}
    comparable = cfg.runs > 0 and not any(failed.values())
    # savings always read as the quicker path measured against the slower one
    fast, slow = sorted(modes, key=ACCESS_MODES.index, reverse=True)
    for q in (50, 99):
        # latencies of unsuccessful requests are not access times, so no saving is quoted
        value = f"{report.saving(fast, slow, q):.4f}" if comparable else "n/a"
        report.notes.append(f"saving_p{q} {fast} vs {slow} = {value}")
    for m in modes:
        report.notes.append(f"unsuccessful {m} = {failed[m]}")
    return BenchResult(report, trace, ledgers)


# -- hierarchy vs flat roles -----------------------------------------------

@dataclass(frozen=True)
class _Msg:
    kind: str
    i: int
    ok: bool = False

    def trace_detail(self) -> str:
        return f"{self.kind} {self.i}"


class _FlatValidator(Actor):
    def __init__(self, name: str, site: str, bench: "_RdbacRun"):
        super().__init__(name, site)
        self.bench = bench
        self.peers: list[str] = []
        self.votes: dict[int, list[bool]] = {}
        self.done: set[int] = set()

    def receive(self, src: str, msg: _Msg) -> None:
        b = self.bench
        if msg.kind == "check":
            ok = b.flat_decide(msg.i)
            for p in self.peers:
                self.send(p, _Msg("vote", msg.i, ok), b.timings.validator_us)
            self.timer(b.timings.validator_us, _Msg("vote", msg.i, ok))
        elif msg.kind == "vote":
            votes = self.votes.setdefault(msg.i, [])
            votes.append(msg.ok)
            if msg.i not in self.done:
                for verdict in (True, False):
                    if votes.count(verdict) >= b.quorum:
                        self.done.add(msg.i)
                        self.send("hub", _Msg("done", msg.i, verdict))
                        break


class _FlatHub(Actor):
    def __init__(self, bench: "_RdbacRun"):
        super().__init__("hub", "lan")
        self.bench = bench
        self.answered: set[int] = set()

    def receive(self, src: str, msg: _Msg) -> None:
        b = self.bench
        if msg.kind == "req":
            for v in b.validator_names:
                self.send(v, _Msg("check", msg.i), b.timings.hub_us)
        elif msg.kind == "done" and msg.i not in self.answered:
            self.answered.add(msg.i)
            if msg.ok:
                self.send(b.device_name(msg.i), _Msg("key", msg.i))
            self.send("client", _Msg("reply", msg.i, msg.ok))


class _HierDevice(Actor):
    """A device of the hierarchy; non-control devices consult their control device."""

    def __init__(self, name: str, did, bench: "_RdbacRun"):
        super().__init__(name, "lan")
        self.did = did
        self.bench = bench

    def receive(self, src: str, msg: _Msg) -> None:
        b = self.bench
        t = b.timings.device_us
        if msg.kind == "req":
            if b.tree.is_control(self.did):
                self._answer(msg.i, b.hier_decide(msg.i))
            else:
                self.send(b.actor_for(b.tree.node(self.did).control), _Msg("lookup", msg.i), t)
        elif msg.kind == "lookup":
            self.send(src, _Msg("verdict", msg.i, b.hier_decide(msg.i)), t)
        elif msg.kind == "verdict":
            self._answer(msg.i, msg.ok)
        elif msg.kind == "connect":
            self.send("client", _Msg("accept", msg.i, True), t)
        elif msg.kind == "key":
            pass

    def _answer(self, i: int, ok: bool) -> None:
        b = self.bench
        self.send("client", _Msg("reply", i, ok), b.timings.device_us)
        if ok:
            # endorsement of the device-issued token runs off the critical path
            self.send("hub", _Msg("endorse", i), b.timings.device_us)


class _RdbacHub(Actor):
    """Root of the hierarchy: answers lookups for devices with no control ancestor."""

    def __init__(self, bench: "_RdbacRun"):
        super().__init__("hub", "lan")
        self.bench = bench

    def receive(self, src: str, msg: _Msg) -> None:
        if msg.kind == "lookup":
            self.send(src, _Msg("verdict", msg.i, self.bench.hier_decide(msg.i)), self.bench.timings.hub_us)


class _RdbacClient(Actor):
    def __init__(self, bench: "_RdbacRun", hierarchical: bool):
        super().__init__("client", "wan:client")
        self.bench = bench
        self.hierarchical = hierarchical
        self.cache: set[tuple] = set()
        self.start: dict[int, int] = {}

    def receive(self, src: str, msg: Any) -> None:
        b = self.bench
        if isinstance(msg, int):
            i = msg
            self.start[i] = b.sim.now
            req = b.requests[i]
            if req in self.cache:
                self.send(b.device_name(i), _Msg("connect", i))
            elif self.hierarchical:
                self.send(b.device_name(i), _Msg("req", i))
            else:
                self.send("hub", _Msg("req", i))
            return
        if msg.kind == "reply":
            if msg.ok and not self.hierarchical:
                self.cache.add(b.requests[msg.i])
                self.send(b.device_name(msg.i), _Msg("connect", msg.i))
                return
            if msg.ok:
                self.cache.add(b.requests[msg.i])
            self._finish(msg.i, msg.ok)
        elif msg.kind == "accept":
            self._finish(msg.i, True)

    def _finish(self, i: int, ok: bool) -> None:
        b = self.bench
        latency = b.sim.now - self.start.pop(i)
        b.results[i] = (latency, ok)
        b.sim.state("client", "decided", f"{i} {'grant' if ok else 'deny'} latency={latency}")


class _RdbacRun:
    def __init__(self, cfg: BenchConfig, tree: DeviceTree, flat: set[int], user_roles, requests,
                 hierarchical: bool, keys: "FlatKeys"):
        self.cfg = cfg
        self.timings = cfg.timings
        self.tree = tree
        self.flat = flat
        self.user_roles = user_roles
        self.requests = requests
        self.keys = keys
        self.quorum = quorum_size(cfg.n_validators)
        self.results: dict[int, tuple[int, bool]] = {}
        self.sim = Simulator(cfg.net, cfg.seed, trace_messages=False)
        self.client = self.sim.add(_RdbacClient(self, hierarchical))
        self.validator_names = [f"val{k}" for k in range(cfg.n_validators)]
        if hierarchical:
            self.sim.add(_RdbacHub(self))
        else:
            self.sim.add(_FlatHub(self))
            vals = [self.sim.add(_FlatValidator(n, f"wan:{n}", self)) for n in self.validator_names]
            for v in vals:
                v.peers = [n for n in self.validator_names if n != v.name]

    def device_name(self, i: int) -> str:
        return self.actor_for(self.requests[i][1])

    def actor_for(self, did) -> str:
        if did == self.tree.root:
            return "hub"
        name = f"d{did}"
        if name not in self.sim.actors:
            self.sim.add(_HierDevice(name, did, self))
        return name

    def hier_decide(self, i: int) -> bool:
        uid, did, pt, sv = self.requests[i]
        return self.tree.validate_any(self.user_roles[uid], did, pt, sv)

    def flat_decide(self, i: int) -> bool:
        uid, did, pt, sv = self.requests[i]
        return any(self.keys(r, did, pt, sv) in self.flat for r in self.user_roles[uid])

    def run(self) -> dict[int, tuple[int, bool]]:
        for i in range(len(self.requests)):
            self.sim.schedule((i + 1) * self.cfg.gap_us, "client", i)
        self.sim.run_until_idle()
        return self.results


class FlatKeys:
    """Packs (role, device, permission type, service) into one integer."""

    def __init__(self, n_nodes: int, services: tuple[str, ...]):
        self.n_nodes = n_nodes
        self.pts = {pt: k for k, pt in enumerate(PermType)}
        self.services = {sv: k for k, sv in enumerate(services)}

    def __call__(self, rid: int, did: int, pt: PermType, sv: str) -> int:
        key = (rid * self.n_nodes + did) * len(self.pts) + self.pts[pt]
        return key * len(self.services) + self.services[sv]


def expand_flat(tree: DeviceTree, placements: list[tuple], keys: FlatKeys) -> set[int]:
    """Every hierarchical assignment copied onto each device of its subtree."""
    flat: set[int] = set()
    for did, g in placements:
        for d in tree.subtree(did):
            flat.add(keys(g.subject, d, g.pt, g.sv))
    return flat


def run_rdbac_bench(cfg: BenchConfig) -> BenchResult:
    report = PercentileReport(cfg.experiment)
    trace: list[str] = []
    disagreements = 0
    for n in cfg.grid:
        tree = gen_tree(cfg.tree)
        devices = [d for d in sorted(tree.nodes) if d != tree.root]
        population = gen_population(devices, cfg.users, cfg.roles, seed=cfg.seed + 1)
        placements = place_controls(tree, PlacementSpec(n, cfg.mu, cfg.sigma, cfg.seed + 2), population)
        for did, g in placements:
            tree.assign(did, g)
        keys = FlatKeys(max(tree.nodes) + 1, population.services)
        flat = expand_flat(tree, placements, keys)
        requests = gen_requests(population, cfg.requests, seed=cfg.seed + 3)
        results = {}
        for label, hier in (("rdbac", True), ("baseline", False)):
            run = _RdbacRun(cfg, tree, flat, population.user_roles, requests, hier, keys)
            results[label] = run.run()
            trace.append(f"# mode={label}:{n}")
            trace.extend(run.sim.trace)
        for label in ("rdbac", "baseline"):
            for i in range(len(requests)):
                latency, ok = results[label].get(i, (0, False))
                report.samples.append(Sample(i, f"{label}:{n}", latency, "grant" if ok else "deny"))
        mismatch = sum(
            1 for i in range(len(requests))
            if results["rdbac"].get(i, (0, None))[1] != results["baseline"].get(i, (0, None))[1]
        )
        disagreements += mismatch
        grants = sum(1 for i in range(len(requests)) if results["rdbac"].get(i, (0, False))[1])
        if requests:
            report.notes.append(
                f"grid={n} saving_p50={report.saving(f'rdbac:{n}', f'baseline:{n}', 50):.4f} "
                f"saving_p99={report.saving(f'rdbac:{n}', f'baseline:{n}', 99):.4f} "
                f"grants={grants} disagreements={mismatch}"
            )
    return BenchResult(report, trace, disagreements=disagreements)


# -- pub/sub delivery --------------------------------------------------------

class _Subscriber(Actor):
    def __init__(self, name: str, sink: dict):
        super().__init__(name, f"wan:{name}")
        self.sink = sink

    def receive(self, src: str, msg: Any) -> None:
        sent_at, i, mode = msg
        self.sink[(mode, i)] = self.sim.now - sent_at
        self.sim.state(self.name, "delivered", f"{mode} {i}")


class _Publisher(Actor):
    def receive(self, src: str, msg: Any) -> None:
        i, mode, dst = msg
        self.send(dst, (self.sim.now, i, mode))


def run_pubsub_bench(cfg: BenchConfig) -> BenchResult:
    """One-way internet delivery to a restarted (cold) or long-lived (warm) subscriber."""
    sim = Simulator(cfg.net, cfg.seed)
    sink: dict = {}
    sim.add(_Publisher("pub", "wan:pub"))
    sim.add(_Subscriber("sub", sink))
    for i in range(cfg.runs):
        cold = sim.add(_Subscriber(f"sub{i}", sink))
        sim.schedule((2 * i + 1) * cfg.gap_us, "pub", (i, "cold", cold.name))
        sim.schedule((2 * i + 2) * cfg.gap_us, "pub", (i, "warm", "sub"))
    sim.run_until_idle()
    report = PercentileReport(cfg.experiment)
    for mode in ("cold", "warm"):
        for i in range(cfg.runs):
            latency = sink.get((mode, i))
            report.samples.append(Sample(i, mode, latency or 0, "delivered" if latency is not None else "held"))
    return BenchResult(report, sim.trace)


def run_bench(cfg: BenchConfig) -> BenchResult:
    if cfg.experiment in ACCESS_MODES:
        return run_access_bench(cfg)
    if cfg.experiment == "rdbac_vs_rbac":
        return run_rdbac_bench(cfg)
    return run_pubsub_bench(cfg)


def write_outputs(result: BenchResult, out_dir: str) -> list[str]:
    paths = emit_report(result.report, out_dir)
    name = result.report.name
    path = os.path.join(out_dir, f"{name}.trace.log")
    with open(path, "w", encoding="utf-8", newline="") as fp:
        fp.write(result.trace_text())
    paths.append(path)
    for mode, led in result.ledgers.items():
        path = os.path.join(out_dir, f"{name}.{mode}.ledger")
        with open(path, "w", encoding="utf-8", newline="") as fp:
            ledger_mod.dump(led, fp)
        paths.append(path)
    return paths
