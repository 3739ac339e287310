"""Re-synthesis of small unitaries into {Rz, Ry, CNOT}.

* 1 qubit: Z-Y-Z Euler angles.
* 2 qubits: KAK (Cartan) form ``K1 exp(i(a XX + b YY + c ZZ)) K2`` computed in
  the magic basis, emitted with 0, 1, 2 or 3 CNOTs depending on the
  interaction coordinates.
* 3 qubits: one quantum-Shannon step (cosine-sine split plus two
  demultiplexed halves) over the 2-qubit routine.

All results equal the input up to a global phase.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.linalg

from . import circuit as qc
from .config import CANONICAL_ATOL, MATRIX_ATOL, UNITARY_REJECT_ATOL
from .data import multiplexed_rotation
from .errors import DecompositionError
from .simulator import unitary_of

_ELIDE_ATOL = 1e-12

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1.0 + 0j, -1.0])
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1.0, 1j])
_PAULI = {"x": _X, "y": _Y, "z": _Z}

_MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex
) / math.sqrt(2)
_MAGIC_DAG = _MAGIC.conj().T
# eigenvalues of XX, YY, ZZ on each magic-basis vector, plus a constant column
_COORD_SYSTEM = np.column_stack(
    [np.ones(4)]
    + [np.real(np.diag(_MAGIC_DAG @ np.kron(p, p) @ _MAGIC)) for p in (_X, _Y, _Z)]
)


def _rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def _ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rx(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def check_unitary(u, dims=(2, 4, 8)):
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] not in dims:
        raise DecompositionError(f"expected a square matrix of size in {dims}, got {u.shape}")
    resid = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if not resid <= UNITARY_REJECT_ATOL:
        raise DecompositionError(f"matrix is not unitary (max |U^dag U - I| = {resid:.3g})")
    return u


def _is_zero_angle(t):
    # Rz/Ry by a multiple of 2pi is +-I, a global phase
    return abs(math.remainder(t, 2 * math.pi)) < _ELIDE_ATOL


# -- one qubit ----------------------------------------------------------------

def zyz_angles(u) -> tuple[float, float, float, float]:
    """``(phase, a, b, c)`` with ``u = exp(i phase) Rz(a) Ry(b) Rz(c)``."""
    u = np.asarray(u, dtype=complex)
    det = np.linalg.det(u)
    phase = np.angle(det) / 2
    v = u * np.exp(-1j * phase)
    alpha, beta = v[0, 0], v[1, 0]
    b = 2 * math.atan2(abs(beta), abs(alpha))
    arg_a = np.angle(alpha) if abs(alpha) > _ELIDE_ATOL else 0.0
    arg_b = np.angle(beta) if abs(beta) > _ELIDE_ATOL else 0.0
    a = arg_b - arg_a
    c = -arg_a - arg_b
    return float(phase), float(a), float(b), float(c)


def zyz_gates(u, qubit=0) -> list[qc.Gate]:
    """Gates (time order Rz, Ry, Rz) implementing ``u`` up to phase; identity parts elided."""
    _, a, b, c = zyz_angles(u)
    if _is_zero_angle(b):
        # Ry(b) is +-I: a single Z rotation remains
        return [] if _is_zero_angle(a + c) else [qc.rz(qubit, a + c)]
    gates = []
    if not _is_zero_angle(c):
        gates.append(qc.rz(qubit, c))
    gates.append(qc.ry(qubit, b))
    if not _is_zero_angle(a):
        gates.append(qc.rz(qubit, a))
    return gates


# -- two qubits ---------------------------------------------------------------

def kron_factor(k) -> tuple[np.ndarray, np.ndarray]:
    """Split a 4x4 tensor product ``A (x) B`` into unitary factors (phase moved to A)."""
    r = np.asarray(k).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, s, vh = np.linalg.svd(r)
    if s[1] > 1e-6 * s[0]:
        raise DecompositionError("matrix is not a tensor product of single-qubit gates")
    a = uu[:, 0].reshape(2, 2) * math.sqrt(s[0])
    b = vh[0, :].reshape(2, 2) * math.sqrt(s[0])
    scale = np.sqrt(np.linalg.det(b))
    return a * scale, b / scale


def _real_orthogonal_eigvecs(m2):
    """Real orthogonal P (det +1) with ``P.T @ m2 @ P`` diagonal, for symmetric unitary m2."""
    re, im = m2.real, m2.imag
    rng = np.random.default_rng(12345)
    for _ in range(16):
        t = rng.uniform(0, 2 * math.pi)
        _, p = np.linalg.eigh(math.cos(t) * re + math.sin(t) * im)
        d = p.T @ m2 @ p
        if np.max(np.abs(d - np.diag(np.diag(d)))) < 1e-12:
            if np.linalg.det(p) < 0:
                p[:, 0] = -p[:, 0]
            return p
    raise DecompositionError("failed to diagonalize the magic-basis Gram matrix")


def kak(u):
    """``(K1, (a, b, c), K2, phase)`` with ``u = e^{i phase} K1 exp(i(aXX+bYY+cZZ)) K2``.

    ``K1`` and ``K2`` are returned as pairs of 2x2 factors ``(A, B)`` meaning ``A (x) B``.
    """
    u = check_unitary(u, (4,))
    det = np.linalg.det(u)
    su = u * det ** (-0.25)
    up = _MAGIC_DAG @ su @ _MAGIC
    p = _real_orthogonal_eigvecs(up.T @ up)
    theta = np.angle(np.diag(p.T @ (up.T @ up) @ p)) / 2
    o1 = up @ p @ np.diag(np.exp(-1j * theta))
    if np.max(np.abs(o1.imag)) > 1e-7:
        raise DecompositionError("KAK left factor is not real orthogonal")
    o1 = o1.real
    if np.linalg.det(o1) < 0:
        o1[:, 0] = -o1[:, 0]
        theta[0] += math.pi
    phi, a, b, c = np.linalg.solve(_COORD_SYSTEM, theta)
    k1 = kron_factor(_MAGIC @ o1 @ _MAGIC_DAG)
    k2 = kron_factor(_MAGIC @ p.T @ _MAGIC_DAG)
    phase = float(phi + np.angle(det) / 4)
    return k1, (float(a), float(b), float(c)), k2, phase


def interaction(a, b, c):
    xx, yy, zz = (np.kron(p, p) for p in (_X, _Y, _Z))
    return scipy.linalg.expm(1j * (a * xx + b * yy + c * zz))


def _find_clifford(z_to, x_to=None):
    """Single-qubit Clifford W with W Z W^dag = +-sigma_{z_to} (and W X W^dag = +-sigma_{x_to})."""
    words = [_I]
    for length in range(1, 7):
        for word in itertools.product((_H, _S), repeat=length):
            m = _I
            for g in word:
                m = g @ m
            words.append(m)
    for w in words:
        wz = w @ _Z @ w.conj().T
        if not any(np.allclose(wz, s * _PAULI[z_to]) for s in (1, -1)):
            continue
        if x_to is None:
            return w
        wx = w @ _X @ w.conj().T
        if any(np.allclose(wx, s * _PAULI[x_to]) for s in (1, -1)):
            return w
    raise AssertionError("unreachable: Clifford group covers every Pauli pair")


_AXES = ("x", "y", "z")
_W_SINGLE = {ax: _find_clifford(ax) for ax in _AXES}
_W_PAIR = {(za, xa): _find_clifford(za, xa) for za in _AXES for xa in _AXES if za != xa}


def _reduce(value):
    """Split a coordinate into ``r + k pi/2`` with ``r`` in [-pi/4, pi/4], snapped."""
    k = round(value / (math.pi / 2))
    r = value - k * math.pi / 2
    if abs(r) < CANONICAL_ATOL:
        r = 0.0
    elif abs(abs(r) - math.pi / 4) < CANONICAL_ATOL:
        r = math.copysign(math.pi / 4, r)
    return r, int(k)


def _core_ops(coords):
    """Ops list realizing ``exp(i(a XX + b YY + c ZZ))`` up to local Paulis and phase.

    Returns ``(ops, fix)`` where the interaction equals ``ops`` followed by the
    local ``fix`` (pair of 2x2), all up to global phase. An op is either
    ``("u", A, B)`` or ``("cx", control, target)``.
    """
    fix = [_I, _I]
    reduced = []
    for axis, value in zip(_AXES, coords):
        r, k = _reduce(value)
        if k % 2:
            fix = [_PAULI[axis] @ fix[0], _PAULI[axis] @ fix[1]]
        reduced.append(r)
    nonzero = [ax for ax, r in zip(_AXES, reduced) if r != 0.0]
    by_axis = dict(zip(_AXES, reduced))

    if not nonzero:
        return [], fix
    if len(nonzero) == 1 and abs(by_axis[nonzero[0]]) == math.pi / 4:
        ax = nonzero[0]
        if by_axis[ax] < 0:
            # exp(-i pi/4 PP) = exp(i pi/4 PP) exp(-i pi/2 PP), the latter is P (x) P
            fix = [_PAULI[ax] @ fix[0], _PAULI[ax] @ fix[1]]
        w = _W_SINGLE[ax]
        wd = w.conj().T
        # exp(i pi/4 ZZ) ~ CZ (Rz(-pi/2) (x) Rz(-pi/2)),  CZ = (I (x) H) CNOT (I (x) H)
        ops = [
            ("u", _rz(-math.pi / 2) @ wd, _H @ _rz(-math.pi / 2) @ wd),
            ("cx", 0, 1),
            ("u", w, w @ _H),
        ]
        return ops, fix
    if len(nonzero) <= 2:
        zero_axis = next(ax for ax in _AXES if by_axis[ax] == 0.0)
        za, xa = [ax for ax in _AXES if ax != zero_axis]
        w = _W_PAIR[(za, xa)]
        wd = w.conj().T
        # exp(i(p ZZ + r XX)) = CNOT (Rx(-2r) (x) Rz(-2p)) CNOT
        ops = [
            ("u", wd, wd),
            ("cx", 0, 1),
            ("u", _rx(-2 * by_axis[xa]), _rz(-2 * by_axis[za])),
            ("cx", 0, 1),
            ("u", w, w),
        ]
        return ops, fix
    a, b, c = reduced
    ops = [
        ("u", _I, _rz(math.pi / 2)),
        ("cx", 1, 0),
        ("u", _rz(math.pi / 2 - 2 * c), _ry(math.pi / 2 - 2 * a)),
        ("cx", 0, 1),
        ("u", _I, _ry(2 * b - math.pi / 2)),
        ("cx", 1, 0),
        ("u", _rz(-math.pi / 2), _I),
    ]
    return ops, fix


def _emit(ops, qubits=(0, 1)):
    """Merge adjacent local layers and lower everything to gates."""
    merged = []
    for op in ops:
        if op[0] == "u" and merged and merged[-1][0] == "u":
            _, a0, b0 = merged[-1]
            merged[-1] = ("u", op[1] @ a0, op[2] @ b0)
        else:
            merged.append(op)
    gates = []
    for op in merged:
        if op[0] == "cx":
            gates.append(qc.cnot(qubits[op[1]], qubits[op[2]]))
        else:
            gates.extend(zyz_gates(op[1], qubits[0]))
            gates.extend(zyz_gates(op[2], qubits[1]))
    return gates


def two_qubit_gates(u, qubits=(0, 1)) -> list[qc.Gate]:
    (a1, b1), coords, (a2, b2), _ = kak(u)
    core, fix = _core_ops(coords)
    ops = [("u", fix[0] @ a2, fix[1] @ b2), *core, ("u", a1, b1)]
    return _emit(ops, qubits)


def cnot_count(u) -> int:
    """CNOTs the 2-qubit routine emits for ``u``."""
    return sum(1 for g in two_qubit_gates(u) if g.kind is qc.GateKind.CNOT)


# -- three qubits -------------------------------------------------------------

def _demultiplex(l0, l1):
    """``l0 (+) l1 = (I (x) V) (D (+) D^dag) (I (x) W)``; returns ``V, phases, W``.

    The middle factor is a Z rotation on the control qubit by ``phases[j]``
    for each basis state ``j`` of the target register.
    """
    t, v = scipy.linalg.schur(l0 @ l1.conj().T, output="complex")
    d = np.sqrt(np.diag(t))
    w = np.diag(d) @ v.conj().T @ l1
    return v, -2 * np.angle(d), w


def _three_qubit(u) -> list[qc.Gate]:
    # u = (L0 (+) L1) [[C, -S], [S, C]] (R0 (+) R1), split on qubit 0
    left, middle, right = scipy.linalg.cossin(u, p=4, q=4)
    ry_angles = 2 * np.arctan2(middle[4:, :4].diagonal().real, middle[:4, :4].diagonal().real)
    gates = []
    for block, mux in ((right, None), (left, ry_angles)):
        if mux is not None:
            gates.extend(multiplexed_rotation("ry", mux, [1, 2], 0))
        v, phases, w = _demultiplex(block[:4, :4], block[4:, 4:])
        gates.extend(two_qubit_gates(w, (1, 2)))
        gates.extend(multiplexed_rotation("rz", phases, [1, 2], 0))
        gates.extend(two_qubit_gates(v, (1, 2)))
    return gates


# -- entry point --------------------------------------------------------------

def decompose_block(u) -> qc.Circuit:
    """Circuit over ``log2(dim)`` qubits equal to ``u`` up to a global phase."""
    u = check_unitary(u)
    dim = u.shape[0]
    if dim == 2:
        c = qc.Circuit(1, tuple(zyz_gates(u)))
    elif dim == 4:
        c = qc.Circuit(2, tuple(two_qubit_gates(u)))
    else:
        c = qc.Circuit(3, tuple(_three_qubit(u)))
    err = phase_distance(unitary_of(c), u)
    if err > MATRIX_ATOL:
        raise DecompositionError(f"re-synthesis residual {err:.3g} exceeds {MATRIX_ATOL}")
    return c


def phase_distance(a, b) -> float:
    """max |a - e^{i phi} b| with the phase fixed on the largest entry of b."""
    k = np.argmax(np.abs(b))
    phase = a.flat[k] / b.flat[k]
    phase /= abs(phase)
    return float(np.max(np.abs(a - phase * b)))
