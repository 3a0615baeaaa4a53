"""Dense kernels and randomized SVD drivers.

Callbacks passed to the drivers act on blocks: `apply` maps an (n_in, l)
array to (n_out, l) and `adjoint` maps (n_out, l) to (n_in, l).
"""

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from opentelemetry import trace
from pydantic import BaseModel, ConfigDict, Field

from rschwarz.core.errors import (
    AdjointInconsistent,
    ConfigError,
    NoConvergence,
    RankDeficient,
)
from rschwarz.core.logging.logging import get_logger

logger = get_logger("lowrank")
tracer = trace.get_tracer(__name__)

RANK_TOL = 1e-13
ADJOINT_TOL = 1e-8
PROBE_PAIRS = 3
JACOBI_MAX_SWEEPS = 60

BlockMap = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class SVDTriple:
    """Factors of M ~ U diag(S) V^T, with S nonincreasing.

    `samples` is the number of random test vectors used by a randomized
    driver (each costs one forward and one adjoint application), zero for a
    dense decomposition.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    samples: int = 0
    seed: int | None = None

    def __post_init__(self):
        if not (self.U.shape[1] == self.S.size == self.V.shape[1]):
            raise ValueError(
                f"inconsistent factor shapes U{self.U.shape} S{self.S.shape} V{self.V.shape}"
            )

    @property
    def rank(self) -> int:
        return self.S.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    def truncate(self, k: int) -> "SVDTriple":
        return SVDTriple(
            self.U[:, :k], self.S[:k], self.V[:, :k], self.samples, self.seed
        )

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


class RSVDConfig(BaseModel):
    """Target rank, oversampling and seed of a randomized SVD."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(default=40, ge=1, description="Target rank")
    p: int = Field(default=10, ge=0, description="Oversampling")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Generator seed")

    @property
    def samples(self) -> int:
        return self.k + self.p

    def check_dims(self, m: int, n: int) -> None:
        """Raise ConfigError unless k + p <= min(m, n)."""
        if self.samples > min(m, n):
            raise ConfigError(
                f"rsvd.k + rsvd.p = {self.samples} exceeds min dimension {min(m, n)} "
                f"of a {m}x{n} operator"
            )


def gaussian_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """I.i.d. standard normal matrix from a PCG64 generator seeded with `seed`."""
    if rows < 1 or cols < 1:
        raise ValueError(f"gaussian matrix needs positive shape, got {rows}x{cols}")
    return np.random.default_rng(seed).standard_normal((rows, cols))


def _orthonormal_basis(y: np.ndarray) -> tuple[np.ndarray, list[int]]:
    m, n = y.shape
    threshold = RANK_TOL * np.linalg.norm(y)
    basis: list[np.ndarray] = []
    dropped: list[int] = []
    for j in range(n):
        v = y[:, j].astype(float, copy=True)
        # modified Gram-Schmidt, then one reorthogonalization pass
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm == 0.0 or norm <= threshold:
            dropped.append(j)
            continue
        basis.append(v / norm)
    q = np.column_stack(basis) if basis else np.zeros((m, 0))
    return q, dropped


def qr_orthonormalize(y: np.ndarray, strict: bool = True) -> np.ndarray:
    """Orthonormal basis of the column space of `y`.

    Args:
        y: (m, n) matrix.
        strict: Raise when columns are dropped instead of returning the
            smaller basis.

    Raises:
        RankDeficient: In strict mode, if a column's residual norm falls below
            1e-13 * ||y||_F. The exception carries the kept basis.
    """
    q, dropped = _orthonormal_basis(np.asarray(y, dtype=float))
    if dropped and strict:
        raise RankDeficient(q, dropped)
    return q


def _jacobi_sweeps(a: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Jacobi on the columns of a; returns (A V, V)."""
    n = a.shape[1]
    cols = np.array(a.T, dtype=float)  # row i is column i of a
    v = np.eye(n)
    tiny = (n * np.finfo(float).eps * max(np.linalg.norm(a), np.finfo(float).tiny)) ** 2
    for sweep in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = cols[i] @ cols[i]
                beta = cols[j] @ cols[j]
                gamma = cols[i] @ cols[j]
                if min(alpha, beta) <= tiny or abs(gamma) <= tol * math.sqrt(
                    alpha * beta
                ):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                ci = cols[i].copy()
                cols[i] = c * ci - s * cols[j]
                cols[j] = s * ci + c * cols[j]
                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
        if not rotated:
            logger.debug("Jacobi SVD converged", sweeps=sweep + 1, columns=n)
            return cols.T, v
    raise NoConvergence(
        f"one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps ({n} columns)"
    )


def dense_svd(m: np.ndarray) -> SVDTriple:
    """Thin SVD by one-sided Jacobi rotations.

    Tall inputs are reduced to their R factor first; wide inputs are
    transposed. Singular vectors of zero singular values are completed to an
    orthonormal set.

    Raises:
        NoConvergence: If the sweep budget is exhausted.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("dense_svd needs finite entries")
    rows, cols = m.shape
    if rows < cols:
        t = dense_svd(m.T)
        return SVDTriple(t.V, t.S, t.U)
    if cols == 0:
        return SVDTriple(np.zeros((rows, 0)), np.zeros(0), np.zeros((0, 0)))

    q, r = np.linalg.qr(m, mode="reduced")
    tol = cols * np.finfo(float).eps
    ar, v = _jacobi_sweeps(r, tol)
    s = np.linalg.norm(ar, axis=0)
    order = np.argsort(-s, kind="stable")
    s, ar, v = s[order], ar[:, order], v[:, order]

    u_small = np.zeros_like(ar)
    cutoff = max(s[0], np.finfo(float).tiny) * cols * np.finfo(float).eps
    live = s > cutoff
    u_small[:, live] = ar[:, live] / s[live]
    if not live.all():
        kept = u_small[:, live]
        complement = scipy.linalg.null_space(kept.T) if live.any() else np.eye(cols)
        u_small[:, ~live] = complement[:, : (~live).sum()]
    return SVDTriple(q @ u_small, s, v)


def _randomized_svd(
    apply: BlockMap,
    adjoint: BlockMap,
    n_in: int,
    n_out: int,
    cfg: RSVDConfig,
) -> SVDTriple:
    omega = gaussian_matrix(n_in, cfg.samples, cfg.seed)
    y = apply(omega)
    q, dropped = _orthonormal_basis(y)
    if dropped:
        logger.warning(
            "Range basis is rank deficient",
            samples=cfg.samples,
            kept=q.shape[1],
            dropped=len(dropped),
        )
    if q.shape[1] == 0:
        return SVDTriple(
            np.zeros((n_out, 0)), np.zeros(0), np.zeros((n_in, 0)), cfg.samples, cfg.seed
        )
    b = adjoint(q)
    inner = dense_svd(b.T)
    rank = min(cfg.k, inner.rank)
    return SVDTriple(
        q @ inner.U[:, :rank],
        inner.S[:rank].copy(),
        inner.V[:, :rank],
        samples=cfg.samples,
        seed=cfg.seed,
    )


def rsvd_matrix(m: np.ndarray, cfg: RSVDConfig) -> SVDTriple:
    """Rank-k randomized SVD of an explicit matrix with k + p test vectors."""
    m = np.asarray(m, dtype=float)
    rows, cols = m.shape
    cfg.check_dims(rows, cols)
    with tracer.start_as_current_span("rsvd_matrix") as span:
        span.set_attribute("k", cfg.k)
        span.set_attribute("p", cfg.p)
        return _randomized_svd(lambda x: m @ x, lambda x: m.T @ x, cols, rows, cfg)


def check_adjoint(
    apply: BlockMap,
    adjoint: BlockMap,
    n_in: int,
    n_out: int,
    seed: int,
    patch_id: int | None = None,
) -> float:
    """Largest relative defect of <g, apply f> = <adjoint g, f> on random probes.

    Probes come from a generator stream separate from the sampling one.

    Raises:
        AdjointInconsistent: If the defect exceeds 1e-8.
    """
    rng = np.random.default_rng([seed, 1])
    f = rng.standard_normal((n_in, PROBE_PAIRS))
    g = rng.standard_normal((n_out, PROBE_PAIRS))
    af = apply(f)
    atg = adjoint(g)
    lhs = np.einsum("ij,ij->j", g, af)
    rhs = np.einsum("ij,ij->j", atg, f)
    scale = np.maximum(
        np.linalg.norm(g, axis=0) * np.linalg.norm(af, axis=0),
        np.linalg.norm(atg, axis=0) * np.linalg.norm(f, axis=0),
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        defects = np.where(scale > 0, np.abs(lhs - rhs) / scale, 0.0)
    defect = float(defects.max())
    if not defect <= ADJOINT_TOL:
        raise AdjointInconsistent(defect, patch_id)
    return defect


def rsvd_operator(
    apply: BlockMap,
    adjoint: BlockMap,
    n_in: int,
    n_out: int,
    cfg: RSVDConfig,
    patch_id: int | None = None,
) -> SVDTriple:
    """Rank-k randomized SVD of an operator known through its actions.

    Args:
        apply: Forward action on column blocks.
        adjoint: Transposed action on column blocks.
        n_in: Input dimension.
        n_out: Output dimension.
        cfg: Rank, oversampling and seed.
        patch_id: Patch being compressed, for error reports.

    Raises:
        AdjointInconsistent: If `adjoint` is not the transpose of `apply`.
    """
    cfg.check_dims(n_out, n_in)
    with tracer.start_as_current_span("rsvd_operator") as span:
        span.set_attribute("k", cfg.k)
        span.set_attribute("p", cfg.p)
        if patch_id is not None:
            span.set_attribute("patch_id", patch_id)
        defect = check_adjoint(apply, adjoint, n_in, n_out, cfg.seed, patch_id)
        triple = _randomized_svd(apply, adjoint, n_in, n_out, cfg)
    logger.debug(
        "Compressed operator",
        patch_id=patch_id,
        rank=triple.rank,
        samples=triple.samples,
        adjoint_defect=defect,
    )
    return triple


def rsvd_expected_bound(sigma: np.ndarray, k: int, m: int, n: int) -> float:
    """Expected rank-k spectral error bound (1 + 4 sqrt(2 min(m, n) / (k - 1))) sigma_{k+1}."""
    if k < 2:
        raise ValueError(f"the bound needs k >= 2, got {k}")
    sigma = np.asarray(sigma, dtype=float)
    tail = float(sigma[k]) if k < sigma.size else 0.0
    return (1.0 + 4.0 * math.sqrt(2.0 * min(m, n) / (k - 1))) * tail
