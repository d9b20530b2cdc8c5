"""Neighboring contrastive loss, softmax cross-entropy and their sum.

Every loss returns its value together with the gradient wrt its input, so
the training loop never needs an autograd engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, ShapeError

COSINE_EPS = 1e-12


def _row_norms(z: np.ndarray) -> np.ndarray:
    return np.maximum(np.sqrt((z * z).sum(axis=1)), COSINE_EPS)


def cosine_sim_matrix(z: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of the rows of ``z``; zero rows are guarded by eps."""
    if z.ndim != 2 or z.shape[0] < 1:
        raise ShapeError("z must be a 2-D matrix with at least one row")
    zn = z / _row_norms(z)[:, None]
    s = zn @ zn.T
    # fold the two triangles together so S is exactly symmetric
    s = 0.5 * (s + s.T)
    np.clip(s, -1.0, 1.0, out=s)
    return s


def cosine_sim_backward(z: np.ndarray, grad_s: np.ndarray) -> np.ndarray:
    """Gradient wrt ``z`` given ``dL/dS`` for ``S = cosine_sim_matrix(z)``.

    The clip to [-1, 1] only ever moves entries by rounding error and is
    treated as the identity here.
    """
    norms = _row_norms(z)
    zn = z / norms[:, None]
    g_sym = 0.5 * (grad_s + grad_s.T)
    g_zn = 2.0 * (g_sym @ zn)
    raw = np.sqrt((z * z).sum(axis=1))
    active = raw > COSINE_EPS
    # d(z/|z|)/dz = (I - zn zn^T)/|z| where the norm is not clamped, 1/eps otherwise
    radial = (g_zn * zn).sum(axis=1, keepdims=True)
    out = np.where(active[:, None], g_zn - zn * radial, g_zn)
    return out / norms[:, None]


@dataclass
class NContrastResult:
    loss: float
    grad_z: np.ndarray
    skipped: int
    per_node: np.ndarray


def ncontrast_loss(z: np.ndarray, gamma: np.ndarray, tau: float, alpha: float = 1.0) -> NContrastResult:
    """Neighboring contrastive loss over a batch of embeddings.

    For node ``i``::

        l_i = -log( sum_{j != i} gamma_ij exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )

    with ``s`` the cosine similarity. Nodes whose off-diagonal ``gamma`` row
    sums to zero have no positive in the batch; they are dropped from the
    average and counted in ``skipped``. The returned loss is
    ``alpha * mean(l_i)`` over the remaining nodes.
    """
    if z.ndim != 2:
        raise ShapeError("z must be 2-D")
    b = z.shape[0]
    if b < 2:
        raise ValueError("ncontrast needs a batch of at least 2 nodes")
    if gamma.shape != (b, b):
        raise ShapeError(f"gamma must be {b}x{b}, got {gamma.shape}")
    if tau <= 0:
        raise ValueError("temperature tau must be positive")
    if np.any(gamma < 0):
        raise ValueError("gamma must be nonnegative")

    off = ~np.eye(b, dtype=bool)
    g = np.where(off, gamma, 0.0)
    pos_mass = g.sum(axis=1)
    contributing = pos_mass > 0
    b_eff = int(contributing.sum())
    skipped = b - b_eff

    s = cosine_sim_matrix(z)
    logits = s / tau
    masked = np.where(off, logits, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.where(off, np.exp(logits - m), 0.0)
    den = e.sum(axis=1)
    num = (g * e).sum(axis=1)

    per_node = np.zeros(b, dtype=DTYPE)
    grad_z = np.zeros_like(z, dtype=DTYPE)
    if b_eff == 0:
        return NContrastResult(0.0, grad_z, skipped, per_node)

    c = contributing
    per_node[c] = np.log(den[c]) - np.log(num[c])
    scale = alpha / b_eff
    loss = scale * float(per_node[c].sum())

    # dl_i/dlogit_ij = e_ij/den_i - gamma_ij e_ij/num_i, j != i
    grad_logits = np.zeros((b, b), dtype=DTYPE)
    grad_logits[c] = e[c] / den[c, None] - g[c] * e[c] / num[c, None]
    grad_s = grad_logits * (scale / tau)
    grad_z = cosine_sim_backward(z, grad_s)
    return NContrastResult(loss, grad_z, skipped, per_node)


@dataclass
class CrossEntropyResult:
    loss: float
    grad: np.ndarray
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask) -> CrossEntropyResult:
    """Mean negative log-likelihood over the rows listed in ``mask``.

    ``labels`` is indexed by row of ``logits``. An empty ``mask`` gives a
    zero loss, zero gradient and ``count == 0``.
    """
    mask = np.asarray(mask, dtype=np.int64)
    grad = np.zeros_like(logits, dtype=DTYPE)
    if mask.size == 0:
        return CrossEntropyResult(0.0, grad, 0)
    y = np.asarray(labels)[mask]
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ValueError("cross-entropy mask includes an unlabeled or out-of-range row")
    rows = logits[mask]
    shifted = rows - rows.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    k = mask.size
    loss = -float(log_p[np.arange(k), y].sum()) / k
    p = np.exp(log_p)
    p[np.arange(k), y] -= 1.0
    # duplicate mask rows accumulate, matching the loss definition
    np.add.at(grad, mask, p / k)
    return CrossEntropyResult(loss, grad, k)


@dataclass
class LossReport:
    loss_nc: float
    loss_ce: float
    loss_final: float
    skipped_nodes: int
    no_labeled: bool
    grad_z: np.ndarray
    grad_y: np.ndarray


def combined_loss(z: np.ndarray, y_logits: np.ndarray, gamma: np.ndarray, labels: np.ndarray,
                  train_rows, tau: float, alpha: float) -> LossReport:
    """``loss_ce + loss_nc`` for one batch.

    ``labels`` and ``train_rows`` are in batch-row coordinates. With
    ``alpha == 0`` the contrastive term is not evaluated at all, so the total
    equals the cross-entropy exactly.
    """
    ce = softmax_cross_entropy(y_logits, labels, train_rows)
    if alpha == 0:
        loss_nc, grad_z, skipped = 0.0, np.zeros_like(z), 0
    else:
        nc = ncontrast_loss(z, gamma, tau, alpha)
        loss_nc, grad_z, skipped = nc.loss, nc.grad_z, nc.skipped
    return LossReport(
        loss_nc=loss_nc,
        loss_ce=ce.loss,
        loss_final=ce.loss + loss_nc,
        skipped_nodes=skipped,
        no_labeled=ce.empty,
        grad_z=grad_z,
        grad_y=ce.grad,
    )
