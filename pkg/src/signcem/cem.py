"""Localized multiscale basis functions on oversampling regions.

For coarse element i with oversampling region R = K_i^m, each basis
function phi_{i,j} in H^1_0(R) solves

    a(phi, w)_R + s(P_H phi, P_H w)_R = s(psi_{i,j}, P_H w)_{K_i}   for all w.

With Z stacking the aux-coefficient maps ``Psi_K^T M_abs`` of the elements
in R and S the block-diagonal signed Gram matrix, the left operator is
``A_R + Z^T S Z``. It is solved through the sparse augmented system

    [ A_R   Z^T ] [phi]   [Z_i^T S_i e_j]
    [ S Z   -I  ] [ y ] = [      0      ]

which stays sparse even when element blocks are large and makes no
assumption on the invertibility of S.
"""
from __future__ import annotations

import hashlib
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_global
from .auxspace import AuxSpace
from .coeff import CoefficientField
from .errors import ConfigurationError, ProvenanceError, SingularMatrixError
from .grid import GridHierarchy, Region, oversample
from .linsolve import factor, solve

__all__ = [
    "MsBasisSet",
    "LocalSystem",
    "local_system",
    "build_basis",
    "build_all",
    "decay_study",
    "basis_digest",
    "write_basis_cache",
    "read_basis_cache",
]

CACHE_MAGIC = b"SCEMBAS\0"
CACHE_VERSION = 1


def basis_digest(aux_digest: str, m: int) -> str:
    return hashlib.sha256(f"basis|{aux_digest}|{m}".encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class MsBasisSet:
    """Column ``p = i * l_star + j`` of ``phi`` is basis (i, j) as a fine-node vector."""

    grid: GridHierarchy
    l_star: int
    m: int
    phi: sp.csc_matrix
    field_digest: str
    digest: str

    @property
    def n_basis(self) -> int:
        return self.phi.shape[1]

    def column(self, i: int, j: int) -> np.ndarray:
        return self.phi[:, i * self.l_star + j].toarray().ravel()

    def index(self, p: int) -> tuple[int, int]:
        return divmod(p, self.l_star)


@dataclass(frozen=True, eq=False)
class LocalSystem:
    element: int
    m: int
    region: Region
    factorization: object
    rhs: np.ndarray  # (n_interior + n_aux, l_star)

    def solve(self) -> np.ndarray:
        """(n_interior, l_star) basis values on the region's interior nodes."""
        n = len(self.region.interior_nodes)
        return solve(self.factorization, self.rhs)[:n]


def _coupling(g: GridHierarchy, aux: AuxSpace, region: Region, proj_rows, grams):
    elems = region.elements
    ls = aux.l_star
    pos = region.interior_position(g.element_nodes[elems])  # (nK, nloc)
    P = proj_rows[elems]  # (nK, ls, nloc)
    SP = np.einsum("kab,kbn->kan", grams[elems], P)
    nK, nloc = pos.shape
    rows = (np.arange(nK)[:, None, None] * ls + np.arange(ls)[None, :, None])
    rows = np.broadcast_to(rows, (nK, ls, nloc))
    cols = np.broadcast_to(pos[:, None, :], (nK, ls, nloc))
    keep = cols >= 0
    n_int = len(region.interior_nodes)
    shape = (nK * ls, n_int)
    Z = sp.csr_matrix((P[keep], (rows[keep], cols[keep])), shape=shape)
    SZ = sp.csr_matrix((SP[keep], (rows[keep], cols[keep])), shape=shape)
    return Z, SZ


def local_system(g: GridHierarchy, A_signed: sp.csr_matrix, aux: AuxSpace, i: int, m: int,
                 proj_rows=None, grams=None) -> LocalSystem:
    """Assemble and factor the basis system of element ``i`` with ``m`` layers."""
    proj_rows = aux.proj_rows if proj_rows is None else proj_rows
    grams = aux.grams if grams is None else grams
    region = oversample(g, i, m)
    idx = region.interior_nodes
    A_loc = A_signed[idx][:, idx]
    Z, SZ = _coupling(g, aux, region, proj_rows, grams)
    n_aux = Z.shape[0]
    K = sp.bmat([[A_loc, Z.T], [SZ, -sp.identity(n_aux)]], format="csc")
    try:
        # nonsymmetric values, symmetric pattern
        F = factor(K, symmetric=False, ordering="MMD_AT_PLUS_A")
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"local basis system singular for element {i}, m={m}: {exc}",
            pivot_index=exc.pivot_index) from exc
    k = int(np.searchsorted(region.elements, i))
    ls = aux.l_star
    rhs = np.zeros((K.shape[0], ls))
    rhs[:len(idx)] = SZ[k * ls:(k + 1) * ls].toarray().T
    return LocalSystem(i, m, region, F, rhs)


def build_basis(g: GridHierarchy, field: CoefficientField, aux: AuxSpace, i: int, j: int,
                m: int) -> np.ndarray:
    """Single basis function phi_{i,j} as a global fine-node vector."""
    if not 0 <= j < aux.l_star:
        raise ConfigurationError(f"basis index j={j} outside 0..{aux.l_star - 1}")
    _check_aux(aux, field)
    A = assemble_global(g, field, "signed-sigma", "stiffness")
    ls = local_system(g, A, aux, i, m)
    out = np.zeros(g.n_nodes)
    out[ls.region.interior_nodes] = ls.solve()[:, j]
    return out


def _check_aux(aux: AuxSpace, field: CoefficientField):
    if aux.field_digest != field.digest:
        raise ProvenanceError("auxiliary space was built for a different coefficient")


def build_all(g: GridHierarchy, field: CoefficientField, aux: AuxSpace, m: int,
              threads: int = 1, cache_dir=None) -> MsBasisSet:
    """All N_elem * l_star basis functions; reads/writes a cache when ``cache_dir`` is set."""
    _check_aux(aux, field)
    digest = basis_digest(aux.digest, m)
    if cache_dir is not None:
        path = Path(cache_dir) / f"basis-{digest[:24]}.bin"
        if path.exists():
            cached = read_basis_cache(path, g)
            if cached.digest == digest:
                return MsBasisSet(g, aux.l_star, m, cached.phi, field.digest, digest)
    A = assemble_global(g, field, "signed-sigma", "stiffness")
    proj_rows, grams = aux.proj_rows, aux.grams

    def work(i):
        ls = local_system(g, A, aux, i, m, proj_rows, grams)
        return ls.region.interior_nodes, ls.solve()

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, range(g.n_elem)))
    else:
        results = [work(i) for i in range(g.n_elem)]

    l_star = aux.l_star
    indptr = [0]
    indices, data = [], []
    for nodes, vals in results:
        for j in range(l_star):
            indices.append(nodes)
            data.append(vals[:, j])
            indptr.append(indptr[-1] + len(nodes))
    phi = sp.csc_matrix((np.concatenate(data), np.concatenate(indices), np.array(indptr)),
                        shape=(g.n_nodes, g.n_elem * l_star))
    out = MsBasisSet(g, l_star, m, phi, field.digest, digest)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        write_basis_cache(path, out)
    return out


def decay_study(g: GridHierarchy, field: CoefficientField, aux: AuxSpace, i: int, j: int,
                m_list, m_ref: int):
    """Relative differences of phi_{i,j}^m against phi_{i,j}^{m_ref}.

    Returns a list of ``(m, energy_diff, l2_diff)``; energy uses |sigma|.
    """
    m_list = list(m_list)
    if any(m > m_ref for m in m_list):
        raise ConfigurationError("m_ref must be at least every m in m_list")
    _check_aux(aux, field)
    A = assemble_global(g, field, "signed-sigma", "stiffness")
    A_abs = assemble_global(g, field, "abs-sigma", "stiffness")
    M = assemble_global(g, field, "unit", "mass")
    proj_rows, grams = aux.proj_rows, aux.grams

    def phi(m):
        ls = local_system(g, A, aux, i, m, proj_rows, grams)
        v = np.zeros(g.n_nodes)
        v[ls.region.interior_nodes] = ls.solve()[:, j]
        return v

    ref = phi(m_ref)
    e_ref = np.sqrt(ref @ (A_abs @ ref))
    l_ref = np.sqrt(ref @ (M @ ref))
    out = []
    for m in m_list:
        d = phi(m) - ref
        out.append((m, float(np.sqrt(max(d @ (A_abs @ d), 0.0)) / e_ref),
                    float(np.sqrt(max(d @ (M @ d), 0.0)) / l_ref)))
    return out


# header: magic, version, digest(32 bytes), n_elem, l_star, m, n_nodes
_HEADER = struct.Struct("<8sI32sIIIQ")


def write_basis_cache(path, basis: MsBasisSet):
    """Little-endian binary: header then per-basis (nnz, int64 indices, float64 values)."""
    phi = basis.phi.tocsc()
    phi.sort_indices()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, bytes.fromhex(basis.digest),
                              basis.grid.n_elem, basis.l_star, basis.m, basis.grid.n_nodes))
        for p in range(phi.shape[1]):
            lo, hi = phi.indptr[p], phi.indptr[p + 1]
            fh.write(struct.pack("<Q", hi - lo))
            fh.write(phi.indices[lo:hi].astype("<i8").tobytes())
            fh.write(phi.data[lo:hi].astype("<f8").tobytes())
    tmp.replace(path)


@dataclass(frozen=True)
class _CachedBasis:
    digest: str
    n_elem: int
    l_star: int
    m: int
    phi: sp.csc_matrix


def read_basis_cache(path, g: GridHierarchy | None = None) -> _CachedBasis:
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, dig, n_elem, l_star, m, n_nodes = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != CACHE_MAGIC or version != CACHE_VERSION:
            raise ConfigurationError(f"{path} is not a basis cache (version {CACHE_VERSION})")
        if g is not None and (n_elem != g.n_elem or n_nodes != g.n_nodes):
            raise ProvenanceError(f"{path} was written for a different grid")
        # first pass over the record headers sizes the arrays, so the payload is
        # read straight into its final storage
        n_basis = n_elem * l_star
        indptr = np.zeros(n_basis + 1, dtype=np.int64)
        for p in range(n_basis):
            (nnz,) = struct.unpack("<Q", fh.read(8))
            indptr[p + 1] = indptr[p] + nnz
            fh.seek(16 * nnz, 1)
        indices = np.empty(indptr[-1], dtype=np.int64)
        data = np.empty(indptr[-1], dtype=np.float64)
        fh.seek(_HEADER.size)
        for p in range(n_basis):
            lo, hi = indptr[p], indptr[p + 1]
            fh.seek(8, 1)
            fh.readinto(memoryview(indices[lo:hi]).cast("B"))
            fh.readinto(memoryview(data[lo:hi]).cast("B"))
    if sys.byteorder != "little":
        indices.byteswap(inplace=True)
        data.byteswap(inplace=True)
    phi = sp.csc_matrix((data, indices, indptr), shape=(n_nodes, n_basis))
    return _CachedBasis(dig.hex(), n_elem, l_star, m, phi)
