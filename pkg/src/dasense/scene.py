"""Sparse sensor scenes: ground-truth field, DCT measurement basis, signatures.

A scene models a field of K nodes whose scalar readings share a sparse
structure: the length-K reading vector v satisfies v = B^T s, where s is an
S-sparse coefficient vector of length M and the rows of B are M distinct
orthonormal DCT basis vectors. Node k's measurement vector is b_k, the k-th
column of B, so collecting node k's reading contributes one linear equation
b_k^T s = v_k. Taking all M = K basis vectors makes the map invertible.

Signature sequences are unit-norm QPSK codes, one length-L column per node,
used by the downlink request waveform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Scene",
    "SignatureBook",
    "dct_matrix",
    "generate_scene",
    "generate_signatures",
    "scene_to_json",
    "scene_from_json",
]


def dct_matrix(size: int) -> np.ndarray:
    """Orthonormal type-II DCT matrix of shape (size, size).

    Entry (t, n) is a_t * cos(pi * t * (2n + 1) / (2 * size)) with
    a_0 = sqrt(1/size) and a_t = sqrt(2/size) for t >= 1, which makes
    D^T D = I to machine precision.
    """
    if size < 1:
        raise ValueError(f"DCT size must be a positive integer, got {size}")
    t = np.arange(size, dtype=float)[:, None]
    n = np.arange(size, dtype=float)[None, :]
    mat = np.cos(np.pi * t * (2.0 * n + 1.0) / (2.0 * size))
    mat[0, :] *= np.sqrt(1.0 / size)
    mat[1:, :] *= np.sqrt(2.0 / size)
    return mat


@dataclass(frozen=True)
class Scene:
    """Immutable ground truth for one simulation run.

    num_nodes     K, nodes in the field.
    basis_dim     M, length of the sparse coefficient vector.
    sparsity      S, nonzeros in ``coeffs``.
    seed          integer that fully determines the scene.
    basis_rows    sorted indices of the DCT basis vectors forming the rows of B.
    support       sorted indices of the nonzero coefficients.
    signs         the +-1 values placed on the support.
    coeffs        s, length M.
    basis         B, M x K; column k is node k's measurement vector b_k.
    readings      v = B^T s, length K.
    """

    num_nodes: int
    basis_dim: int
    sparsity: int
    seed: int
    basis_rows: np.ndarray
    support: np.ndarray
    signs: np.ndarray
    coeffs: np.ndarray
    basis: np.ndarray
    readings: np.ndarray

    def __post_init__(self) -> None:
        if not (0 <= self.sparsity <= self.basis_dim <= self.num_nodes):
            raise ValueError(
                "need 0 <= sparsity <= basis_dim <= num_nodes, got "
                f"S={self.sparsity}, M={self.basis_dim}, K={self.num_nodes}"
            )
        if self.basis.shape != (self.basis_dim, self.num_nodes):
            raise ValueError("basis shape does not match (basis_dim, num_nodes)")
        for arr in (self.basis_rows, self.support, self.signs, self.coeffs,
                    self.basis, self.readings):
            arr.setflags(write=False)

    def measurement_vector(self, node: int) -> np.ndarray:
        """b_k for one node (length basis_dim)."""
        return self.basis[:, node]


def generate_scene(
    num_nodes: int,
    basis_dim: int,
    sparsity: int,
    seed: int,
    basis_rows: np.ndarray | None = None,
) -> Scene:
    """Draw a scene from an integer seed.

    Three independent child streams of the seed pick, in order, the M basis
    rows (uniform without replacement), the S support positions, and the
    support signs, so each artifact is reproducible on its own. Passing
    ``basis_rows`` pins the basis (e.g. shared across Monte-Carlo runs)
    while support and signs still come from the seed.
    """
    if num_nodes < 1:
        raise ValueError(f"num_nodes must be >= 1, got {num_nodes}")
    if not (0 <= sparsity <= basis_dim <= num_nodes):
        raise ValueError(
            "need 0 <= sparsity <= basis_dim <= num_nodes, got "
            f"S={sparsity}, M={basis_dim}, K={num_nodes}"
        )
    rows_ss, supp_ss, signs_ss = np.random.SeedSequence(seed).spawn(3)
    if basis_rows is None:
        rows_rng = np.random.default_rng(rows_ss)
        basis_rows = np.sort(rows_rng.choice(num_nodes, size=basis_dim, replace=False))
    else:
        basis_rows = np.sort(np.asarray(basis_rows, dtype=np.int64))
        if basis_rows.size != basis_dim or np.unique(basis_rows).size != basis_dim:
            raise ValueError("basis_rows must hold basis_dim distinct indices")
        if basis_rows.min() < 0 or basis_rows.max() >= num_nodes:
            raise ValueError("basis_rows out of range")
    supp_rng = np.random.default_rng(supp_ss)
    support = np.sort(supp_rng.choice(basis_dim, size=sparsity, replace=False))
    signs_rng = np.random.default_rng(signs_ss)
    signs = signs_rng.integers(0, 2, size=sparsity) * 2 - 1

    return _assemble(num_nodes, basis_dim, sparsity, seed, basis_rows, support, signs)


def _assemble(num_nodes, basis_dim, sparsity, seed, basis_rows, support, signs) -> Scene:
    dct = dct_matrix(num_nodes)
    basis = np.ascontiguousarray(dct[:, basis_rows].T)
    coeffs = np.zeros(basis_dim)
    coeffs[support] = signs
    readings = basis.T @ coeffs
    return Scene(
        num_nodes=num_nodes,
        basis_dim=basis_dim,
        sparsity=sparsity,
        seed=seed,
        basis_rows=np.asarray(basis_rows, dtype=np.int64),
        support=np.asarray(support, dtype=np.int64),
        signs=np.asarray(signs, dtype=np.int64),
        coeffs=coeffs,
        basis=basis,
        readings=readings,
    )


def scene_to_json(scene: Scene) -> str:
    """Serialize a scene as integers only; floats are always rebuilt."""
    payload = {
        "num_nodes": scene.num_nodes,
        "basis_dim": scene.basis_dim,
        "sparsity": scene.sparsity,
        "seed": scene.seed,
        "basis_rows": scene.basis_rows.tolist(),
        "support": scene.support.tolist(),
        "signs": scene.signs.tolist(),
    }
    return json.dumps(payload, sort_keys=True)


def scene_from_json(text: str) -> Scene:
    """Rebuild a scene from its integer description (no RNG replay needed)."""
    payload = json.loads(text)
    return _assemble(
        payload["num_nodes"],
        payload["basis_dim"],
        payload["sparsity"],
        payload["seed"],
        np.asarray(payload["basis_rows"], dtype=np.int64),
        np.asarray(payload["support"], dtype=np.int64),
        np.asarray(payload["signs"], dtype=np.int64),
    )


@dataclass(frozen=True)
class SignatureBook:
    """Per-node downlink signature sequences.

    sequences is L x K complex; column k is node k's unit-norm QPSK code
    with entries (+-1 +- 1j) / sqrt(2L).
    """

    length: int
    num_nodes: int
    seed: int
    sequences: np.ndarray

    def __post_init__(self) -> None:
        if self.sequences.shape != (self.length, self.num_nodes):
            raise ValueError("sequences shape does not match (length, num_nodes)")
        self.sequences.setflags(write=False)


def generate_signatures(length: int, num_nodes: int, seed: int) -> SignatureBook:
    if length < 1 or num_nodes < 1:
        raise ValueError("signature length and node count must be >= 1")
    rng = np.random.default_rng(seed)
    re = rng.integers(0, 2, size=(length, num_nodes)) * 2 - 1
    im = rng.integers(0, 2, size=(length, num_nodes)) * 2 - 1
    seqs = (re + 1j * im) / np.sqrt(2.0 * length)
    return SignatureBook(length=length, num_nodes=num_nodes, seed=seed, sequences=seqs)
