"""Gate-list circuit representation, composition, metrics and a text format.

Qubit 0 is the most significant bit of a basis-state index, so the state
``|x> (x) |q>`` of an N-qubit register followed by an M-qubit register has
amplitude layout ``[x0*q, x1*q, ...]``.

Text format, one gate per line::

    qubits 3
    ry 0 0.785398163397
    cnot 0 2
    barrier
    crx 1 2 0.1 @4      # trailing @k ties the angle to trainable slot k
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import CircuitError, ParseError


class GateKind(str, enum.Enum):
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    X = "x"
    H = "h"
    CNOT = "cnot"
    CZ = "cz"
    CRX = "crx"
    BARRIER = "barrier"


ROTATIONS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.CRX})
TWO_QUBIT = frozenset({GateKind.CNOT, GateKind.CZ, GateKind.CRX})

_FOUR_PI = 4.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Map an angle into (-2pi, 2pi]; every supported rotation is 4pi-periodic."""
    theta = math.remainder(float(theta), _FOUR_PI)
    if theta <= -2.0 * math.pi:
        theta += _FOUR_PI
    return theta


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None
    param_id: int | None = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(set(qubits)) != len(qubits):
            raise CircuitError(f"{kind.value}: duplicate qubit in {qubits}")
        if any(q < 0 for q in qubits):
            raise CircuitError(f"{kind.value}: negative qubit index in {qubits}")
        if kind in TWO_QUBIT:
            if len(qubits) != 2:
                raise CircuitError(f"{kind.value} acts on exactly 2 qubits, got {len(qubits)}")
        elif kind is not GateKind.BARRIER and len(qubits) != 1:
            raise CircuitError(f"{kind.value} acts on exactly 1 qubit, got {len(qubits)}")
        if kind in ROTATIONS:
            if self.angle is None:
                raise CircuitError(f"{kind.value} requires an angle")
            object.__setattr__(self, "angle", normalize_angle(self.angle))
        else:
            if self.angle is not None:
                raise CircuitError(f"{kind.value} takes no angle")
            if self.param_id is not None:
                raise CircuitError(f"{kind.value} cannot carry a parameter slot")
        if self.param_id is not None:
            object.__setattr__(self, "param_id", int(self.param_id))

    @property
    def is_barrier(self) -> bool:
        return self.kind is GateKind.BARRIER

    def with_angle(self, angle: float) -> "Gate":
        return replace(self, angle=angle)


def rx(q, angle, param_id=None):
    return Gate(GateKind.RX, (q,), angle, param_id)


def ry(q, angle, param_id=None):
    return Gate(GateKind.RY, (q,), angle, param_id)


def rz(q, angle, param_id=None):
    return Gate(GateKind.RZ, (q,), angle, param_id)


def x(q):
    return Gate(GateKind.X, (q,))


def h(q):
    return Gate(GateKind.H, (q,))


def cnot(control, target):
    return Gate(GateKind.CNOT, (control, target))


def cz(a, b):
    return Gate(GateKind.CZ, (a, b))


def crx(control, target, angle, param_id=None):
    return Gate(GateKind.CRX, (control, target), angle, param_id)


def barrier(n_qubits):
    return Gate(GateKind.BARRIER, tuple(range(n_qubits)))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if int(self.n_qubits) < 1:
            raise CircuitError(f"a circuit needs at least one qubit, got {self.n_qubits}")
        object.__setattr__(self, "n_qubits", int(self.n_qubits))
        object.__setattr__(self, "gates", tuple(self.gates))
        full = tuple(range(self.n_qubits))
        for gate in self.gates:
            if not isinstance(gate, Gate):
                raise CircuitError(f"not a Gate: {gate!r}")
            if gate.is_barrier:
                if gate.qubits != full:
                    raise CircuitError("barrier must span every qubit of the circuit")
            elif max(gate.qubits) >= self.n_qubits:
                raise CircuitError(
                    f"{gate.kind.value} on {gate.qubits} outside a {self.n_qubits}-qubit circuit"
                )

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def without_barriers(self) -> "Circuit":
        return Circuit(self.n_qubits, tuple(g for g in self.gates if not g.is_barrier))

    def bind(self, theta: Sequence[float]) -> "Circuit":
        """Substitute ``theta[param_id]`` into every tagged rotation."""
        gates = []
        for g in self.gates:
            if g.param_id is not None:
                if g.param_id >= len(theta):
                    raise CircuitError(f"parameter slot {g.param_id} unbound (len(theta)={len(theta)})")
                g = g.with_angle(theta[g.param_id])
            gates.append(g)
        return Circuit(self.n_qubits, tuple(gates))

    def append(self, *gates: Gate) -> "Circuit":
        return Circuit(self.n_qubits, self.gates + tuple(gates))


def compose(a: Circuit, b: Circuit) -> Circuit:
    """Run ``a`` then ``b``; the unitary is ``U_b @ U_a``."""
    if a.n_qubits != b.n_qubits:
        raise CircuitError(f"cannot compose {a.n_qubits}-qubit and {b.n_qubits}-qubit circuits")
    return Circuit(a.n_qubits, a.gates + b.gates)


def embed(c: Circuit, n_qubits: int, offset: int = 0) -> Circuit:
    """Place ``c`` on qubits ``offset .. offset + c.n_qubits - 1`` of a wider register."""
    if offset < 0 or offset + c.n_qubits > n_qubits:
        raise CircuitError(f"cannot place {c.n_qubits} qubits at offset {offset} in {n_qubits}")
    gates = []
    for g in c.gates:
        if g.is_barrier:
            gates.append(barrier(n_qubits))
        else:
            gates.append(replace(g, qubits=tuple(q + offset for q in g.qubits)))
    return Circuit(n_qubits, tuple(gates))


@dataclass(frozen=True)
class CircuitMetrics:
    gate_count: int
    depth: int
    param_count: int


def metrics(c: Circuit) -> CircuitMetrics:
    frontier = [0] * c.n_qubits
    count = 0
    params = set()
    for g in c.gates:
        if g.is_barrier:
            continue
        count += 1
        level = max(frontier[q] for q in g.qubits) + 1
        for q in g.qubits:
            frontier[q] = level
        if g.param_id is not None:
            params.add(g.param_id)
    return CircuitMetrics(count, max(frontier, default=0), len(params))


def two_qubit_gate_counts(c: Circuit) -> list[int]:
    """Number of two-qubit gates touching each qubit."""
    counts = [0] * c.n_qubits
    for g in c.gates:
        if g.kind in TWO_QUBIT:
            for q in g.qubits:
                counts[q] += 1
    return counts


# -- text format -------------------------------------------------------------

def _fmt_angle(theta: float) -> str:
    return format(theta, ".12g")


def serialize(c: Circuit) -> str:
    lines = [f"qubits {c.n_qubits}"]
    for g in c.gates:
        if g.is_barrier:
            lines.append("barrier")
            continue
        parts = [g.kind.value, *map(str, g.qubits)]
        if g.angle is not None:
            parts.append(_fmt_angle(g.angle))
        if g.param_id is not None:
            parts.append(f"@{g.param_id}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def _parse_int(token, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected integer {what}, got {token!r}", lineno) from None


def parse(text: str) -> Circuit:
    n_qubits = None
    gates: list[Gate] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].lower()
        if n_qubits is None:
            if head != "qubits" or len(tokens) != 2:
                raise ParseError("first statement must be 'qubits <n>'", lineno)
            n_qubits = _parse_int(tokens[1], lineno, "qubit count")
            if n_qubits < 1:
                raise ParseError("qubit count must be positive", lineno)
            continue
        if head == "qubits":
            raise ParseError("duplicate 'qubits' header", lineno)
        try:
            kind = GateKind(head)
        except ValueError:
            raise ParseError(f"unknown gate kind {tokens[0]!r}", lineno) from None
        args = tokens[1:]
        if kind is GateKind.BARRIER:
            if args:
                raise ParseError("barrier takes no arguments", lineno)
            gates.append(barrier(n_qubits))
            continue
        param_id = None
        if args and args[-1].startswith("@"):
            param_id = _parse_int(args[-1][1:], lineno, "parameter slot")
            args = args[:-1]
        arity = 2 if kind in TWO_QUBIT else 1
        n_angle = 1 if kind in ROTATIONS else 0
        if len(args) != arity + n_angle:
            raise ParseError(
                f"{kind.value} expects {arity} qubit(s)" + (" and an angle" if n_angle else ""),
                lineno,
            )
        qubits = tuple(_parse_int(t, lineno, "qubit") for t in args[:arity])
        angle = None
        if n_angle:
            try:
                angle = float(args[arity])
            except ValueError:
                raise ParseError(f"bad angle {args[arity]!r}", lineno) from None
            if not math.isfinite(angle):
                raise ParseError(f"non-finite angle {args[arity]!r}", lineno)
        if any(q >= n_qubits for q in qubits):
            raise ParseError(f"qubit index out of range for {n_qubits} qubits", lineno)
        try:
            gates.append(Gate(kind, qubits, angle, param_id))
        except CircuitError as exc:
            raise ParseError(str(exc), lineno) from None
    if n_qubits is None:
        raise ParseError("missing 'qubits <n>' header")
    return Circuit(n_qubits, tuple(gates))


def structurally_equal(a: Circuit, b: Circuit, rel: float = 1e-11) -> bool:
    """Same kinds, qubits and slots in the same order; angles equal to ~12 digits."""
    if a.n_qubits != b.n_qubits or len(a.gates) != len(b.gates):
        return False
    for ga, gb in zip(a.gates, b.gates):
        if (ga.kind, ga.qubits, ga.param_id) != (gb.kind, gb.qubits, gb.param_id):
            return False
        if ga.angle is not None and not math.isclose(ga.angle, gb.angle, rel_tol=rel, abs_tol=1e-12):
            return False
    return True


def from_gates(n_qubits: int, gates: Iterable[Gate]) -> Circuit:
    return Circuit(n_qubits, tuple(gates))
