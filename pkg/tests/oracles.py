"""Independent reference implementations used only by the tests.

Everything here works on explicit dense matrices or brute-force loops and
shares no code with the package's fast paths.
"""
import itertools
from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


def kron_all(mats):
    return reduce(np.kron, mats)


def dense_single(gate, qubit, n):
    """Full 2**n operator of a one-qubit gate; qubit 0 is the leftmost factor."""
    return kron_all([gate if q == qubit else I2 for q in range(n)])


def dense_controlled(gate, control, target, n):
    off = kron_all([P0 if q == control else I2 for q in range(n)])
    on = kron_all([P1 if q == control else (gate if q == target else I2) for q in range(n)])
    return off + on


def dense_marginal(amps, measured, n):
    out = np.zeros(2 ** len(measured))
    for i, a in enumerate(amps):
        bits = format(i, f"0{n}b")
        c = int("".join(bits[q] for q in measured), 2)
        out[c] += abs(a) ** 2
    return out


def pair_count_sparsity(labels):
    m = len(labels)
    hits = 0
    for a in labels:
        for b in labels:
            hits += a == b
    return hits / (m * m)


def rotation(axis, angle):
    paulis = {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    # exp(-i a P / 2) = cos(a/2) I - i sin(a/2) P
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * paulis[axis]


# the 13-gate set in listing order: (axis or fixed matrix, controlled?)
_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
GATE_TABLE = {
    1: ("fixed", _PAULI["x"], False),
    2: ("fixed", _PAULI["y"], False),
    3: ("fixed", _PAULI["z"], False),
    4: ("fixed", I2, False),
    5: ("rot", "x", False),
    6: ("rot", "y", False),
    7: ("rot", "z", False),
    8: ("fixed", _PAULI["x"], True),
    9: ("fixed", _PAULI["y"], True),
    10: ("fixed", _PAULI["z"], True),
    11: ("rot", "x", True),
    12: ("rot", "y", True),
    13: ("rot", "z", True),
}


def dense_vqcnn_probs(num_qubits, class_count, structure, theta, amps):
    """Brute-force forward pass: rebuilds the layered circuit as one dense unitary.

    Re-derives the layout rules (log2(n) layers, adjacent-pair convolution with
    shared angles, pooling of leading pairs keeping the first qubit, CRz then
    CRx controlled by the dropped qubit) without using the package.
    """
    n = num_qubits
    n_meas = max(1, int(np.ceil(np.log2(class_count))))
    p_u = sum(GATE_TABLE[g][0] == "rot" for g in structure)
    per_layer = p_u + 2
    total = np.eye(2**n, dtype=complex)
    active = list(range(n))
    depth_count = int(np.log2(n))
    for depth in range(depth_count):
        block = theta[depth * per_layer:(depth + 1) * per_layer]
        for a, b in zip(active[:-1], active[1:]):
            k = 0
            for g in structure:
                kind, what, controlled = GATE_TABLE[g]
                if kind == "rot":
                    mat = rotation(what, block[k])
                    k += 1
                else:
                    mat = what
                odd = g % 2 == 1
                if controlled:
                    c, t = (a, b) if odd else (b, a)
                    op = dense_controlled(mat, c, t, n)
                else:
                    op = dense_single(mat, a if odd else b, n)
                total = op @ total
        keep = max(n_meas, n >> (depth + 1))
        dropped = []
        for j in range(len(active) - keep):
            kept, drop = active[2 * j], active[2 * j + 1]
            total = dense_controlled(rotation("z", block[p_u]), drop, kept, n) @ total
            total = dense_controlled(rotation("x", block[p_u + 1]), drop, kept, n) @ total
            dropped.append(drop)
        active = [q for q in active if q not in dropped]
    out = total @ amps
    marg = dense_marginal(out, active, n)
    valid = marg[:class_count]
    return valid / valid.sum()


def nearest_centroid_accuracy(features, labels):
    classes = sorted(set(labels.tolist()))
    centroids = np.stack([features[labels == c].mean(axis=0) for c in classes])
    dists = ((features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = np.array(classes)[dists.argmin(axis=1)]
    return float(np.mean(pred == labels))


def all_structures(budget):
    return list(itertools.product(range(1, 14), repeat=budget))
