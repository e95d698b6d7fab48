"""Sum-factorized tensor-product kernels.

Fields live on tensor grids with the xi index running fastest: a d-dimensional
field is an array whose trailing d axes are (..., n_zeta, n_eta, n_xi), so the
flat node index is ``i + n_xi * (j + n_eta * k)``.  Leading axes (elements,
state components) are carried along untouched.

Two-point "providers" are callables that evaluate entries of a symmetric
two-point matrix lazily for batches of node pairs; the Hadamard kernels never
form the full n^d x n^d matrix.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


def apply_1d(A: np.ndarray, x: np.ndarray, direction: int, d: int) -> np.ndarray:
    """Apply ``A`` along one reference direction of a d-dimensional field."""
    axis = x.ndim - 1 - direction
    if x.shape[axis] != A.shape[1]:
        raise ValueError(
            f"operator has {A.shape[1]} columns but direction {direction} "
            f"has extent {x.shape[axis]}")
    if direction == 0:
        return x @ A.T
    lead = x.shape[:axis]
    rest = x.shape[axis + 1:]
    y = A @ x.reshape(lead + (A.shape[1], int(np.prod(rest))))
    return y.reshape(lead + (A.shape[0],) + rest)


def apply_tensor_product(ops: Sequence[np.ndarray | None], x: np.ndarray) -> np.ndarray:
    """(A_zeta (x) A_eta (x) A_xi) x by one pass per direction.

    ``ops`` is ordered (A_xi, A_eta, A_zeta)[:d]; ``None`` means identity.
    """
    d = len(ops)
    if x.ndim < d:
        raise ValueError("field has fewer axes than operator directions")
    for k, A in enumerate(ops):
        if A is not None:
            x = apply_1d(np.asarray(A), x, k, d)
    return x


def apply_tensor_product_flat(ops: Sequence[np.ndarray | None], values: np.ndarray,
                              extents: Sequence[int]) -> np.ndarray:
    """Flat-vector version: ``values`` has length prod(extents), xi fastest."""
    extents = tuple(extents)
    if values.shape[-1] != int(np.prod(extents)):
        raise ValueError("vector length does not match the product of extents")
    field = values.reshape(values.shape[:-1] + extents[::-1])
    out = apply_tensor_product(ops, field)
    return out.reshape(values.shape[:-1] + (-1,))


def kron_operator(ops: Sequence[np.ndarray]) -> np.ndarray:
    """Dense A_zeta (x) A_eta (x) A_xi, matching the xi-fastest ordering."""
    out = np.ones((1, 1))
    for A in ops:
        out = np.kron(A, out)
    return out


class CountingProvider:
    """Wraps a two-point provider and counts evaluated pair entries."""

    def __init__(self, fn: Callable[..., np.ndarray]):
        self.fn = fn
        self.calls = 0

    def __call__(self, *args):
        idx = args[-1]
        self.calls += int(np.size(idx))
        return self.fn(*args)


@lru_cache(maxsize=None)
def _line_tables(extents: tuple[int, ...], direction: int):
    """Flat node ids laid out as (n_dir, n_lines) for lines along ``direction``."""
    d = len(extents)
    ids = np.arange(int(np.prod(extents))).reshape(extents[::-1])
    axis = d - 1 - direction
    lines = np.moveaxis(ids, axis, 0).reshape(extents[direction], -1)
    lines.setflags(write=False)
    return lines


@lru_cache(maxsize=None)
def _upper_pairs(n: int):
    a, b = np.triu_indices(n, k=1)
    incidence = np.zeros((n, a.size))
    incidence[a, np.arange(a.size)] = 1.0
    incidence[b, np.arange(a.size)] = -1.0
    for arr in (a, b, incidence):
        arr.setflags(write=False)
    return a, b, incidence


def line_weights(weights_1d: Sequence[np.ndarray], direction: int) -> np.ndarray:
    """Product of the other directions' quadrature weights, one per line."""
    d = len(weights_1d)
    w = np.ones(1)
    for k in range(d):
        if k != direction:
            w = np.kron(weights_1d[k], w)
    return w


def face_node_ids(extents: Sequence[int], direction: int, side: int) -> np.ndarray:
    """Flat volume ids of the layer of nodes nearest face (direction, side)."""
    lines = _line_tables(tuple(extents), direction)
    return lines[0 if side == 0 else -1]


def hadamard_sumfac_volume(skew_1d: Sequence[np.ndarray],
                           weights_1d: Sequence[np.ndarray],
                           provider: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
                           extents: Sequence[int] | None = None) -> np.ndarray:
    """Row sums of sum_k (Q_k - Q_k^T) o F_k over the volume nodes.

    ``skew_1d[k]`` is the 1D matrix W D - D^T W of direction k and the full
    operator is that matrix tensored with the other directions' weights.
    ``provider(k, I, J)`` returns F_k at flat node pairs (I, J) with trailing
    axes equal to ``I.shape``; F must be symmetric.  Only pairs a < b along
    each line are requested, d * n^{d-1} * n(n-1)/2 entries in total.
    Returns an array of shape (..., N_v) with leading axes from the provider.
    """
    d = len(skew_1d)
    if extents is None:
        extents = tuple(S.shape[0] for S in skew_1d)
    extents = tuple(extents)
    out = None
    for k in range(d):
        n = extents[k]
        if n < 2:
            continue
        lines = _line_tables(extents, k)
        a, b, incidence = _upper_pairs(n)
        I, J = lines[a], lines[b]
        vals = provider(k, I, J)
        coef = skew_1d[k][a, b][:, None] * line_weights(weights_1d, k)[None, :]
        contrib = incidence @ (vals * coef)
        if out is None:
            out = np.zeros(contrib.shape[:-2] + (int(np.prod(extents)),))
        out[..., lines] += contrib
    return out


def hadamard_sumfac_surface(face_interp_1d: Sequence[np.ndarray],
                            weights_1d: Sequence[np.ndarray],
                            provider: Callable[[int, int, np.ndarray, np.ndarray], np.ndarray],
                            extents: Sequence[int] | None = None):
    """Off-diagonal (volume-face) blocks of (Q~ - Q~^T) o F.

    ``face_interp_1d[k]`` is the 2 x n matrix of flux-basis values at
    xi_k = -1 and +1.  Faces are numbered 2k + side with outward reference
    normal (-1)^(side+1) e_k; face nodes are the remaining directions' nodes
    in xi-fastest order.  ``provider(face, k, I, F)`` returns F_k between volume
    nodes I and face nodes F (arrays of shape (n, n_face_nodes)).

    Returns (volume_part (..., N_v), [face_part (..., n_face_nodes)] * 2d).
    """
    d = len(face_interp_1d)
    if extents is None:
        extents = tuple(P.shape[1] for P in face_interp_1d)
    extents = tuple(extents)
    vol = None
    faces = []
    for k in range(d):
        lines = _line_tables(extents, k)
        wf = line_weights(weights_1d, k)
        fids = np.broadcast_to(np.arange(lines.shape[1]), lines.shape)
        for side in (0, 1):
            normal = 1.0 if side else -1.0
            vals = provider(2 * k + side, k, lines, fids)
            coef = (face_interp_1d[k][side][:, None] * wf[None, :]) * normal
            prod = vals * coef
            if vol is None:
                vol = np.zeros(prod.shape[:-2] + (int(np.prod(extents)),))
            vol[..., lines] += prod
            faces.append(-prod.sum(axis=-2))
    return vol, faces


def dense_hadamard_oracle(skew_full: np.ndarray, F_full: np.ndarray) -> np.ndarray:
    """Literal sum_k [(Q~_k - Q~_k^T) o F_k] 1 from dense matrices.

    ``skew_full`` has shape (N, N, d) and holds Q~ - Q~^T; ``F_full`` has shape
    (N, N, d) or (N, N, d, m) for m-component fluxes.
    """
    if skew_full.shape[:3] != F_full.shape[:3]:
        raise ValueError("operator and flux shapes disagree")
    if F_full.ndim == 3:
        return np.einsum("ijk,ijk->i", skew_full, F_full)
    return np.einsum("ijk,ijkm->im", skew_full, F_full)
