"""Obfuscating compiler passes for the encryption boundary.

Pipeline: ``insert_dummies`` puts a CNOT pair (split by a barrier) on every
secure qubit and splits its Ry angle around it, ``partition`` groups each
barrier-delimited segment into small blocks, each block is re-synthesized from
its unitary, and the result is flattened. The barrier keeps the two dummy
CNOTs in different blocks, so re-synthesis cannot cancel them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import circuit as qc
from .decompose import _H, decompose_block, phase_distance, zyz_gates
from .errors import PassError
from .simulator import unitary_of

MAX_ATTEMPTS = 16


@dataclass
class Block:
    """Gates on a small qubit set; ``qubits`` fixes the local qubit order (first = MSB)."""

    qubits: tuple[int, ...]
    gates: list[qc.Gate] = field(default_factory=list)
    _unitary: np.ndarray | None = field(default=None, repr=False, compare=False)

    def local_circuit(self) -> qc.Circuit:
        pos = {q: i for i, q in enumerate(self.qubits)}
        local = [qc.Gate(g.kind, tuple(pos[q] for q in g.qubits), g.angle, g.param_id) for g in self.gates]
        return qc.Circuit(len(self.qubits), tuple(local))

    @property
    def unitary(self) -> np.ndarray:
        if self._unitary is None:
            self._unitary = unitary_of(self.local_circuit())
        return self._unitary


def _secure_ry_positions(c: qc.Circuit, secure_qubits):
    found = {}
    for i, g in enumerate(c.gates):
        if g.kind is qc.GateKind.RY and g.qubits[0] in secure_qubits:
            if g.qubits[0] in found:
                raise PassError(f"secure qubit {g.qubits[0]} carries more than one Ry")
            found[g.qubits[0]] = i
    missing = set(secure_qubits) - set(found)
    if missing:
        raise PassError(f"secure qubits {sorted(missing)} carry no Ry rotation")
    return found


def insert_dummies(c: qc.Circuit, secure_qubits, seed=None, dummy_pairs=1) -> qc.Circuit:
    """Split each secure Ry(d) into Ry(a_0) [CNOT | CNOT] Ry(a_1) ... with sum(a) = d.

    Every cut point is uniform in (0, d); the CNOTs use the secure qubit as
    control and a random data qubit as target, with a barrier in between.
    """
    secure = sorted(int(q) for q in secure_qubits)
    if dummy_pairs < 1:
        raise PassError("at least one dummy pair is required")
    data_qubits = [q for q in range(c.n_qubits) if q not in secure]
    if not data_qubits:
        raise PassError("no data qubit available as dummy target")
    positions = _secure_ry_positions(c, secure)
    rng = np.random.default_rng(seed)
    replacement = {}
    for s in secure:
        delta = c.gates[positions[s]].angle
        cuts = np.sort(rng.uniform(0.0, 1.0, dummy_pairs)) * delta
        pieces = np.diff(np.concatenate([[0.0], cuts, [delta]]))
        targets = rng.choice(data_qubits, size=dummy_pairs)
        seq = []
        for piece, t in zip(pieces[:-1], targets):
            if piece != 0.0:
                seq.append(qc.ry(s, float(piece)))
            seq += [qc.cnot(s, int(t)), qc.barrier(c.n_qubits), qc.cnot(s, int(t))]
        if pieces[-1] != 0.0:
            seq.append(qc.ry(s, float(pieces[-1])))
        replacement[positions[s]] = seq
    gates = []
    for i, g in enumerate(c.gates):
        gates.extend(replacement.get(i, [g]))
    return qc.Circuit(c.n_qubits, tuple(gates))


def segments(c: qc.Circuit) -> list[list[qc.Gate]]:
    out = [[]]
    for g in c.gates:
        if g.kind is qc.GateKind.BARRIER:
            out.append([])
        else:
            out[-1].append(g)
    return out


def _partition_segment(gates, block_size):
    blocks: list[Block | None] = []
    last: dict[int, int] = {}  # qubit -> index of the latest block touching it
    for g in gates:
        if len(g.qubits) > block_size:
            raise PassError(f"{g.kind.value} on {g.qubits} does not fit a {block_size}-qubit block")
        touched = [last[q] for q in g.qubits if q in last]
        target = max(touched) if touched else None
        if target is not None:
            blk = blocks[target]
            # earlier blocks still latest on all their qubits can move forward into target
            movable = {i for i in touched if i != target
                       and all(last[q] == i for q in blocks[i].qubits)}
            if all(i in movable or i == target for i in touched):
                union = set(blk.qubits) | set(g.qubits)
                for i in movable:
                    union |= set(blocks[i].qubits)
                if len(union) <= block_size:
                    moved = set(g.qubits)
                    for i in sorted(movable):
                        blk.gates.extend(blocks[i].gates)
                        moved |= set(blocks[i].qubits)
                        blocks[i] = None
                    blk.qubits = tuple(sorted(union))
                    blk.gates.append(g)
                    blk._unitary = None
                    # target's other qubits may already belong to later blocks
                    for q in moved:
                        last[q] = target
                    continue
        blocks.append(Block(tuple(sorted(g.qubits)), [g]))
        for q in g.qubits:
            last[q] = len(blocks) - 1
    return [b for b in blocks if b is not None]


def partition(c: qc.Circuit, block_size=2) -> list[list[Block]]:
    """Blocks for each barrier-delimited segment.

    A gate joins the most recent block touching its qubits when the qubit
    union stays within ``block_size``; blocks that are still the latest on all
    their qubits get absorbed along the way. Gates keep their relative order
    inside a block and the block order respects every qubit's gate order, so
    playing the blocks in sequence gives the segment's unitary.
    """
    if block_size not in (2, 3):
        raise PassError(f"block size must be 2 or 3, got {block_size}")
    return [_partition_segment(seg, block_size) for seg in segments(c)]


def resynthesize(block: Block) -> list[qc.Gate]:
    local = decompose_block(block.unitary)
    return [qc.Gate(g.kind, tuple(block.qubits[q] for q in g.qubits), g.angle) for g in local.gates]


def _flip_cnot(control, target):
    """CNOT(c, t) written as (H (x) H) CNOT(t, c) (H (x) H)."""
    h_c, h_t = zyz_gates(_H, control), zyz_gates(_H, target)
    return [*h_c, *h_t, qc.cnot(target, control), *h_c, *h_t]


def break_cancellations(gates) -> list[qc.Gate]:
    """Rewrite a CNOT when the previous gate on both its wires is the same CNOT."""
    out: list[qc.Gate] = []
    last: dict[int, int] = {}
    for g in gates:
        emit = [g]
        if g.kind is qc.GateKind.CNOT:
            c, t = g.qubits
            j = last.get(c)
            if j is not None and last.get(t) == j and out[j] == g:
                emit = _flip_cnot(c, t)
        for e in emit:
            out.append(e)
            for q in e.qubits:
                last[q] = len(out) - 1
    return out


def two_qubit_counts(c: qc.Circuit, qubits) -> dict[int, int]:
    return {q: sum(1 for g in c.gates if len(g.qubits) == 2 and q in g.qubits) for q in qubits}


def has_adjacent_cancelling_cnots(c: qc.Circuit) -> bool:
    gates = c.without_barriers().gates
    return any(a.kind is qc.GateKind.CNOT and a == b for a, b in zip(gates, gates[1:]))


def predicate_holds(c: qc.Circuit, secure_qubits) -> bool:
    return (all(v >= 2 for v in two_qubit_counts(c, secure_qubits).values())
            and not has_adjacent_cancelling_cnots(c))


def secure_qubits_of(enc_circuit: qc.Circuit) -> list[int]:
    return sorted({g.qubits[0] for g in enc_circuit.gates if g.kind is qc.GateKind.RY})


def obfuscate_once(c: qc.Circuit, secure_qubits, seed, block_size=2, dummy_pairs=1) -> qc.Circuit:
    dummied = insert_dummies(c, secure_qubits, seed, dummy_pairs)
    gates = []
    for seg in partition(dummied, block_size):
        for blk in seg:
            gates.extend(resynthesize(blk))
    return qc.Circuit(c.n_qubits, tuple(break_cancellations(gates)))


def obfuscate(data_circuit: qc.Circuit, enc_circuit: qc.Circuit, seed=None, block_size=2,
              dummy_pairs=1, secure_qubits=None) -> qc.Circuit:
    """Merged, re-synthesized ``enc_circuit . data_circuit`` in the {CNOT, Ry, Rz} basis.

    If a draw leaves a secure qubit with fewer than two two-qubit gates (a
    dummy CNOT can cancel against a key CNOT on the same pair), the passes are
    rerun with a seed derived from ``seed`` and the attempt number.
    """
    if data_circuit.n_qubits != enc_circuit.n_qubits:
        raise PassError(f"data circuit has {data_circuit.n_qubits} qubits, "
                        f"encryption circuit {enc_circuit.n_qubits}")
    if secure_qubits is None:
        secure_qubits = secure_qubits_of(enc_circuit)
    merged = qc.compose(data_circuit.without_barriers(), enc_circuit.without_barriers())
    for attempt in range(MAX_ATTEMPTS):
        sub_seed = seed if attempt == 0 else np.random.SeedSequence([seed or 0, attempt])
        out = obfuscate_once(merged, secure_qubits, sub_seed, block_size, dummy_pairs)
        if predicate_holds(out, secure_qubits):
            return out
    raise PassError(f"obfuscation predicate still failing after {MAX_ATTEMPTS} attempts")


def equivalence_residual(a: qc.Circuit, b: qc.Circuit) -> float:
    """max |U_a - e^{i phi} U_b| with phi fixed on the largest entry of U_b."""
    return phase_distance(unitary_of(a), unitary_of(b))
