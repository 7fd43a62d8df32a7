"""Device-hierarchy access control with control devices and cached permissions.

A node becomes a *control device* once it holds directly assigned grants
(``ps``).  Every node keeps a ``control`` pointer to its nearest strict
ancestor control device, and every control device keeps ``dc``, the nearest
control devices below it, plus ``eps``, the union of ``ps`` along its control
ancestry.  Validating a request then needs at most one hop: to the node
itself if it is a control device, else to ``node.control``.

The root is a sentinel standing for the AC hub.  It is permanently a control
device, so ``control`` is defined for every other node.

Node ids can be any hashable values; the simulator uses entity ids and the
benchmark uses plain integers.
"""

from __future__ import annotations

import logging
from typing import Hashable, Iterable, Iterator, NamedTuple, Optional

log = logging.getLogger(__name__)


class Grant(NamedTuple):
    subject: Hashable
    pt: Hashable
    sv: Optional[str] = None


class UnknownDevice(KeyError):
    pass


class DeviceNode:
    __slots__ = ("did", "parent", "children", "depth", "control", "dc", "ps", "eps")

    def __init__(self, did: Hashable, parent: Optional[Hashable], depth: int):
        self.did = did
        self.parent = parent
        self.children: list[Hashable] = []
        self.depth = depth
        self.control: Optional[Hashable] = None
        self.dc: set[Hashable] = set()
        self.ps: set[Grant] = set()
        self.eps: frozenset[Grant] = frozenset()

    def __repr__(self) -> str:
        return f"DeviceNode({self.did!r}, control={self.control!r}, ps={len(self.ps)})"


class DeviceTree:
    def __init__(self, root: Hashable = "hub"):
        self.root = root
        self.nodes: dict[Hashable, DeviceNode] = {root: DeviceNode(root, None, 0)}
        # instrumentation for the most recent propagate_eps call
        self.last_updates = 0
        self.last_recursions = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, did: Hashable) -> bool:
        return did in self.nodes

    def node(self, did: Hashable) -> DeviceNode:
        try:
            return self.nodes[did]
        except KeyError:
            raise UnknownDevice(did) from None

    def is_control(self, did: Hashable) -> bool:
        return did == self.root or bool(self.nodes[did].ps)

    def control_of(self, did: Hashable) -> Hashable:
        """The node that answers validation requests for ``did``."""
        return did if self.is_control(did) else self.node(did).control

    def subtree(self, did: Hashable) -> Iterator[Hashable]:
        stack = [did]
        while stack:
            cur = stack.pop()
            yield cur
            stack.extend(reversed(self.nodes[cur].children))

    def ancestors(self, did: Hashable) -> Iterator[Hashable]:
        """Ancestors-or-self, from ``did`` up to the root."""
        cur: Optional[Hashable] = did
        while cur is not None:
            yield cur
            cur = self.nodes[cur].parent

    # -- structure ---------------------------------------------------------

    def register_leaf(self, did: Hashable, parent: Hashable) -> DeviceNode:
        if did in self.nodes:
            raise ValueError(f"device {did!r} already in tree")
        p = self.node(parent)
        node = DeviceNode(did, parent, p.depth + 1)
        node.control = parent if self.is_control(parent) else p.control
        p.children.append(did)
        self.nodes[did] = node
        return node

    # -- validation --------------------------------------------------------

    def control_validate(self, subject: Hashable, did: Hashable, pt: Hashable, sv: Optional[str] = None) -> bool:
        ctl = self.nodes[self.control_of(did)]
        return Grant(subject, pt, sv) in ctl.eps

    def validate_any(self, subjects: Iterable[Hashable], did: Hashable, pt: Hashable, sv: Optional[str] = None) -> bool:
        eps = self.nodes[self.control_of(did)].eps
        return any(Grant(s, pt, sv) in eps for s in subjects)

    # -- control state transitions ----------------------------------------

    def insert_control(self, did: Hashable) -> None:
        node = self.nodes[did]
        above = self.nodes[node.control]
        above.dc.add(did)
        stack = list(node.children)
        while stack:
            d = self.nodes[stack.pop()]
            d.control = did
            if d.ps:
                node.dc.add(d.did)
                above.dc.discard(d.did)
            else:
                stack.extend(d.children)

    def remove_control(self, did: Hashable) -> None:
        node = self.nodes[did]
        above = self.nodes[node.control]
        above.dc.discard(did)
        node.eps = frozenset()
        moved = []
        stack = list(node.children)
        while stack:
            d = self.nodes[stack.pop()]
            d.control = node.control
            if d.ps:
                above.dc.add(d.did)
                node.dc.discard(d.did)
                moved.append(d.did)
            else:
                stack.extend(d.children)
        for d in moved:
            self.propagate_eps(d)

    def propagate_eps(self, did: Hashable) -> None:
        self.last_updates = 0
        self.last_recursions = -1
        stack = [did]
        while stack:
            node = self.nodes[stack.pop()]
            self.last_recursions += 1
            inherited = self.nodes[node.control].eps if node.control is not None else frozenset()
            new_eps = frozenset(node.ps) | inherited
            if new_eps != node.eps:
                node.eps = new_eps
                self.last_updates += 1
                stack.extend(node.dc)

    def assign(self, did: Hashable, grant: Grant) -> bool:
        """Add ``grant`` at ``did``; returns False when it was already there."""
        node = self.node(did)
        if not self.is_control(did):
            self.insert_control(did)
        if grant in node.ps:
            return False
        node.ps.add(grant)
        self.propagate_eps(did)
        return True

    def revoke(self, did: Hashable, grant: Grant) -> bool:
        node = self.node(did)
        if grant not in node.ps:
            log.warning("revoke of absent grant %r at %r", grant, did)
            return False
        node.ps.discard(grant)
        self.propagate_eps(did)
        if did != self.root and not node.ps:
            self.remove_control(did)
        return True

    # -- serialization -----------------------------------------------------

    def dump(self) -> str:
        """Parent-pointer edge list, one node per line, with its direct grants."""
        lines = []
        for did in self.subtree(self.root):
            node = self.nodes[did]
            ps = ";".join(sorted(_fmt_grant(g) for g in node.ps))
            parent = "-" if node.parent is None else str(node.parent)
            lines.append(f"{did}\t{parent}\t{ps}")
        return "\n".join(lines) + "\n"

    def state(self) -> dict:
        """Plain snapshot of every cached field, for structural comparison."""
        return {
            did: (n.parent, tuple(n.children), n.control, frozenset(n.dc), frozenset(n.ps), n.eps)
            for did, n in self.nodes.items()
        }


def _fmt_grant(g: Grant) -> str:
    pt = getattr(g.pt, "value", g.pt)
    return f"{g.subject}:{pt}:{'' if g.sv is None else g.sv}"


def brute_force_validate(tree: DeviceTree, subject: Hashable, did: Hashable, pt: Hashable, sv: Optional[str] = None) -> bool:
    """Reference check: walk ancestors-or-self looking for a direct grant."""
    g = Grant(subject, pt, sv)
    return any(g in tree.nodes[a].ps for a in tree.ancestors(did))


def _expected_control(tree: DeviceTree, did: Hashable) -> Optional[Hashable]:
    parent = tree.nodes[did].parent
    while parent is not None:
        if parent == tree.root or tree.nodes[parent].ps:
            return parent
        parent = tree.nodes[parent].parent
    return None


def check_invariants(tree: DeviceTree, dids: Optional[Iterable[Hashable]] = None) -> list[str]:
    """Recompute pointers, dc lists and eps from scratch and report mismatches.

    With ``dids`` only those nodes (and the dc lists of their controls) are
    checked, using ancestor walks; otherwise the whole tree is checked in one
    top-down pass.
    """
    if dids is None:
        return _check_full(tree)
    errors = []
    controls = set()
    for did in dids:
        node = tree.nodes[did]
        want = _expected_control(tree, did)
        if node.control != want:
            errors.append(f"I1 {did!r}: control {node.control!r} != {want!r}")
        if want is not None:
            controls.add(want)
        if tree.is_control(did):
            eps = frozenset().union(*(tree.nodes[a].ps for a in tree.ancestors(did)))
            if node.eps != eps:
                errors.append(f"I3 {did!r}: eps mismatch")
            if want is not None:
                if did not in tree.nodes[want].dc:
                    errors.append(f"I2 {did!r} missing from dc of {want!r}")
            controls.add(did)
        elif node.eps or node.dc:
            errors.append(f"I3 {did!r}: non-control node holds eps/dc")
    for c in controls:
        for d in tree.nodes[c].dc:
            if d not in tree.nodes or not tree.is_control(d) or tree.nodes[d].control != c:
                errors.append(f"I2 {c!r}: stale dc entry {d!r}")
    return errors


def _check_full(tree: DeviceTree) -> list[str]:
    errors = []
    expected_dc: dict[Hashable, set] = {}
    root = tree.nodes[tree.root]
    stack: list[tuple[Hashable, Optional[Hashable], frozenset]] = [(tree.root, None, frozenset())]
    while stack:
        did, ctl, acc = stack.pop()
        node = tree.nodes[did]
        if node.control != ctl:
            errors.append(f"I1 {did!r}: control {node.control!r} != {ctl!r}")
        is_ctl = node is root or bool(node.ps)
        if is_ctl:
            acc = acc | node.ps if node.ps else acc
            if node.eps != acc:
                errors.append(f"I3 {did!r}: eps mismatch")
            expected_dc.setdefault(did, set())
            if ctl is not None:
                expected_dc[ctl].add(did)
            below = did
        else:
            if node.eps or node.dc:
                errors.append(f"I3 {did!r}: non-control node holds eps/dc")
            below = ctl
        for child in node.children:
            stack.append((child, below, acc))
    for did, want in expected_dc.items():
        if tree.nodes[did].dc != want:
            errors.append(f"I2 {did!r}: dc mismatch")
    return errors
