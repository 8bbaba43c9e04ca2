from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Literal

import numpy as np
from scipy import linalg

from .config import SynthesisConfig, ToleranceConfig
from .errors import (
    DimensionMismatch,
    InvariantError,
    NotDetectable,
    NotHurwitz,
    NotStabilizable,
    ResidualTooLarge,
    SizeLimit,
    LeaderNotSelfContained,
    UnknownElement,
)
from .linear_model import StateSpace
from .poset import BlockPartition, Poset, in_block_incidence_algebra


logger = logging.getLogger(__name__)

SynthesisStage = Literal["centralized", "leader_follower", "leader"]


@dataclass(frozen=True, eq=False)
class CostSpec:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.asarray(self.R, dtype=float)
        R = R.reshape(0, 0) if R.size == 0 else np.atleast_2d(R)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionMismatch("Cost weights must be square")
        if not np.allclose(Q, Q.T, atol=1e-12) or not np.allclose(R, R.T, atol=1e-12):
            raise InvariantError("Cost weights must be symmetric")
        if Q.size and np.min(np.linalg.eigvalsh(Q)) < -1e-10:
            raise InvariantError("State weight Q must be positive semidefinite")
        if R.size and np.min(np.linalg.eigvalsh(R)) < 1e-10:
            raise InvariantError("Input weight R must be positive definite")

    @classmethod
    def from_statespace(cls, ss: StateSpace) -> CostSpec:
        return cls(ss.Q, ss.R)


@dataclass(frozen=True, eq=False)
class GainMatrix:
    K: np.ndarray
    row_partition: BlockPartition
    col_partition: BlockPartition
    declared_structure: Poset | None = None
    input_labels: tuple[str, ...] = ()
    state_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        K = np.asarray(self.K, dtype=float).reshape(self.row_partition.size, self.col_partition.size)
        object.__setattr__(self, "K", K)
        if self.declared_structure is not None:
            ok, violations = in_block_incidence_algebra(K, self.row_partition, self.col_partition, self.declared_structure)
            if not ok:
                raise InvariantError(f"Gain violates its declared structure at blocks {violations}")


@dataclass(frozen=True)
class SynthesisReport:
    gain: GainMatrix
    riccati_residual: float
    closed_loop_spectral_abscissa: float
    h2_norm: float
    stage: SynthesisStage = "centralized"
    leader_report: SynthesisReport | None = None

    def lines(self) -> list[str]:
        out = [
            f"Synthesis ({self.stage})",
            f"  Riccati relative residual: {self.riccati_residual:.3e}",
            f"  Closed-loop spectral abscissa: {self.closed_loop_spectral_abscissa:.6f}",
            f"  Closed-loop H2 norm: {self.h2_norm:.6f}",
        ]
        if self.leader_report is not None:
            out.append(f"  Leader stage H2 norm: {self.leader_report.h2_norm:.6f}")
        return out


def _columns(M: np.ndarray, rows: int) -> np.ndarray:
    """View M as a (rows, k) matrix; an empty M becomes (rows, 0)."""
    M = np.asarray(M, dtype=float)
    return M.reshape(rows, M.size // rows if rows else 0)


def spectral_abscissa(A: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(A).real)) if A.size else -np.inf


def lyapunov(A: np.ndarray, W: np.ndarray, max_states: int = 200) -> np.ndarray:
    """Solve A^T X + X A + W = 0."""
    if A.shape[0] > max_states:
        raise SizeLimit(f"Lyapunov solve bounded at {max_states} states, got {A.shape[0]}")
    X = linalg.solve_continuous_lyapunov(A.T, -W)
    return 0.5 * (X + X.T)


def _full_rank(M: np.ndarray, n: int, tol: float) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return s.size >= n and s[n - 1] > tol * max(1.0, s[0])


def is_stabilizable(A: np.ndarray, B: np.ndarray, tol: float = 1e-8) -> bool:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -tol:
            continue
        if not _full_rank(np.hstack([lam * np.eye(n) - A, B.astype(complex)]), n, tol):
            return False
    return True


def is_detectable(A: np.ndarray, Q: np.ndarray, tol: float = 1e-8) -> bool:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -tol:
            continue
        if not _full_rank(np.vstack([lam * np.eye(n) - A, Q.astype(complex)]), n, tol):
            return False
    return True


def care_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, X: np.ndarray) -> float:
    """Relative residual ||A^T X + X A - X S X + Q|| / (||Q|| + ||X||^2 ||S||) with S = B R^-1 B^T."""
    S = B @ np.linalg.solve(R, B.T) if B.size else np.zeros_like(A)
    residual = np.linalg.norm(A.T @ X + X @ A - X @ S @ X + Q)
    scale = np.linalg.norm(Q) + np.linalg.norm(X) ** 2 * np.linalg.norm(S)
    return float(residual / scale) if scale > 0 else float(residual)


def solve_care(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    cfg: SynthesisConfig | None = None,
    tol: ToleranceConfig | None = None,
) -> np.ndarray:
    cfg = cfg or SynthesisConfig()
    tol = tol or ToleranceConfig()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = _columns(B, n)
    cost = CostSpec(Q, R)
    if n > cfg.max_states:
        raise SizeLimit(f"Riccati solve bounded at {cfg.max_states} states, got {n}")
    if cost.Q.shape != (n, n) or cost.R.shape != (B.shape[1], B.shape[1]):
        raise DimensionMismatch("Cost weights do not match the system dimensions")

    if B.shape[1] == 0:
        if spectral_abscissa(A) >= 0:
            raise NotStabilizable("A is not Hurwitz and the system has no inputs")
        return lyapunov(A, cost.Q, cfg.max_states)

    if not is_stabilizable(A, B, tol.pbh_rank):
        raise NotStabilizable("(A, B) has an uncontrollable mode in the closed right half-plane")
    if not is_detectable(A, cost.Q, tol.pbh_rank):
        raise NotDetectable("(A, Q) has an unobservable mode in the closed right half-plane")

    S = B @ np.linalg.solve(cost.R, B.T)
    H = np.block([[A, -S], [-cost.Q, -A.T]])
    _, Z, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NotStabilizable(f"Hamiltonian has {sdim} stable eigenvalues, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    X = np.linalg.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)

    for step in range(cfg.newton_steps):
        A_k = A - S @ X
        if spectral_abscissa(A_k) >= 0:
            logger.debug("Skipping Newton refinement: closed loop not Hurwitz at step %d", step)
            break
        X = lyapunov(A_k, cost.Q + X @ S @ X, cfg.max_states)

    residual = care_residual(A, B, cost.Q, cost.R, X)
    logger.debug("CARE solved (n=%d, m=%d), relative residual %.3e", n, B.shape[1], residual)
    if residual > tol.riccati_residual:
        raise ResidualTooLarge(f"Riccati relative residual {residual:.3e} exceeds {tol.riccati_residual:g}")
    if residual > 0.1 * tol.riccati_residual:
        logger.warning("Riccati residual %.3e is close to the tolerance %g", residual, tol.riccati_residual)
    if spectral_abscissa(A - S @ X) >= 0:
        raise NotHurwitz("Riccati solution does not stabilize the closed loop")
    return X


def lqr_gain(
    X: np.ndarray,
    B: np.ndarray,
    R: np.ndarray,
    row_partition: BlockPartition | None = None,
    col_partition: BlockPartition | None = None,
) -> GainMatrix:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    B = _columns(B, n)
    m = B.shape[1]
    K = -np.linalg.solve(np.atleast_2d(R), B.T @ X) if m else np.zeros((0, n))
    return GainMatrix(
        K=K,
        row_partition=row_partition or BlockPartition.from_sizes(["u"], [m]),
        col_partition=col_partition or BlockPartition.from_sizes(["x"], [n]),
    )


def _h2_from_weight(A_cl: np.ndarray, W: np.ndarray, F: np.ndarray, max_states: int = 200) -> float:
    abscissa = spectral_abscissa(A_cl)
    if abscissa >= 0:
        raise NotHurwitz(f"Closed loop has an eigenvalue with real part {abscissa:.3g}")
    X = lyapunov(A_cl, W, max_states)
    return float(np.sqrt(max(np.trace(F.T @ X @ F), 0.0)))


def h2_norm(A_cl: np.ndarray, C_cl: np.ndarray, F: np.ndarray, max_states: int = 200) -> float:
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    C_cl = np.atleast_2d(np.asarray(C_cl, dtype=float))
    F = _columns(F, A_cl.shape[0])
    return _h2_from_weight(A_cl, C_cl.T @ C_cl, F, max_states)


def closed_loop(ss: StateSpace, K: GainMatrix | np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """(A + B K, C + D K) for u = K x."""
    if K is None:
        return ss.A.copy(), ss.C.copy()
    gain = K.K if isinstance(K, GainMatrix) else np.asarray(K, dtype=float)
    if gain.shape != (ss.m, ss.n):
        raise DimensionMismatch(f"Gain is {gain.shape}, system needs {(ss.m, ss.n)}")
    return ss.A + ss.B @ gain, ss.C + ss.D @ gain


def synthesize_centralized(
    ss: StateSpace,
    cfg: SynthesisConfig | None = None,
    tol: ToleranceConfig | None = None,
) -> SynthesisReport:
    cfg = cfg or SynthesisConfig()
    X = solve_care(ss.A, ss.B, ss.Q, ss.R, cfg, tol)
    gain = replace(
        lqr_gain(X, ss.B, ss.R, ss.input_partition, ss.state_partition),
        input_labels=ss.input_labels,
        state_labels=tuple(ss.state_names),
    )
    A_cl, C_cl = closed_loop(ss, gain)
    report = SynthesisReport(
        gain=gain,
        riccati_residual=care_residual(ss.A, ss.B, ss.Q, ss.R, X),
        closed_loop_spectral_abscissa=spectral_abscissa(A_cl),
        h2_norm=h2_norm(A_cl, C_cl, ss.F, cfg.max_states),
        stage="centralized",
    )
    logger.info("Centralized synthesis: H2 = %.6f, abscissa = %.4g", report.h2_norm, report.closed_loop_spectral_abscissa)
    return report


def _leader_indices(ss: StateSpace, leader: Iterable[str], leader_inputs: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
    leader = set(leader)
    unknown = leader - set(ss.state_partition.labels)
    if unknown:
        raise UnknownElement(f"Leader names unknown blocks {sorted(unknown)}")
    states = np.sort(np.concatenate([ss.state_partition.indices(label) for label in sorted(leader)] or [np.array([], dtype=int)]))
    inputs = np.array(sorted(ss.input_index(name) for name in set(leader_inputs)), dtype=int)
    return states.astype(int), inputs


def synthesize_leader_follower(
    ss: StateSpace,
    leader: Iterable[str],
    leader_inputs: Iterable[str],
    cfg: SynthesisConfig | None = None,
    tol: ToleranceConfig | None = None,
    labels: tuple[str, str] = ("leader", "follower"),
) -> SynthesisReport:
    """Two-stage design: regulate the leader on its own, close that loop, then regulate the rest with full feedback."""
    cfg = cfg or SynthesisConfig()
    L, L_in = _leader_indices(ss, leader, leader_inputs)
    Fo = np.setdiff1d(np.arange(ss.n), L)
    Fo_in = np.setdiff1d(np.arange(ss.m), L_in)

    if Fo.size == 0 and Fo_in.size == 0:
        return replace(synthesize_centralized(ss, cfg, tol), stage="leader_follower")

    if L.size and Fo.size and np.any(ss.A[np.ix_(L, Fo)] != 0.0):
        raise LeaderNotSelfContained("Leader dynamics depend on follower states (A[leader, follower] is nonzero)")

    Q, R = ss.Q, ss.R
    K = np.zeros((ss.m, ss.n))
    leader_report = None
    residual = 0.0

    if L.size and L_in.size:
        A_L, B_L = ss.A[np.ix_(L, L)], ss.B[np.ix_(L, L_in)]
        Q_L, R_L = Q[np.ix_(L, L)], R[np.ix_(L_in, L_in)]
        X_L = solve_care(A_L, B_L, Q_L, R_L, cfg, tol)
        K_L = -np.linalg.solve(R_L, B_L.T @ X_L)
        K[np.ix_(L_in, L)] = K_L
        A_L_cl = A_L + B_L @ K_L
        F_L = ss.F[L]
        leader_report = SynthesisReport(
            gain=GainMatrix(K_L, BlockPartition.from_sizes([labels[0]], [L_in.size]), BlockPartition.from_sizes([labels[0]], [L.size])),
            riccati_residual=care_residual(A_L, B_L, Q_L, R_L, X_L),
            closed_loop_spectral_abscissa=spectral_abscissa(A_L_cl),
            h2_norm=_h2_from_weight(A_L_cl, Q_L + K_L.T @ R_L @ K_L, F_L[:, np.any(F_L != 0.0, axis=0)], cfg.max_states),
            stage="leader",
        )
        residual = leader_report.riccati_residual
        logger.info("Leader stage: H2 = %.6f over %d states, %d inputs", leader_report.h2_norm, L.size, L_in.size)

    if Fo_in.size:
        A_2 = ss.A + ss.B[:, L_in] @ K[L_in, :]
        B_2 = ss.B[:, Fo_in]
        R_2 = R[np.ix_(Fo_in, Fo_in)]
        X_2 = solve_care(A_2, B_2, Q, R_2, cfg, tol)
        K[Fo_in, :] = -np.linalg.solve(R_2, B_2.T @ X_2)
        residual = max(residual, care_residual(A_2, B_2, Q, R_2, X_2))

    row_labels = [labels[0] if k in set(L_in.tolist()) else labels[1] for k in range(ss.m)]
    col_labels = [labels[0] if k in set(L.tolist()) else labels[1] for k in range(ss.n)]
    gain = GainMatrix(
        K=K,
        row_partition=BlockPartition.from_labels(row_labels, labels),
        col_partition=BlockPartition.from_labels(col_labels, labels),
        declared_structure=Poset.chain(list(labels)),
        input_labels=ss.input_labels,
        state_labels=tuple(ss.state_names),
    )
    A_cl, C_cl = closed_loop(ss, gain)
    report = SynthesisReport(
        gain=gain,
        riccati_residual=residual,
        closed_loop_spectral_abscissa=spectral_abscissa(A_cl),
        h2_norm=h2_norm(A_cl, C_cl, ss.F, cfg.max_states),
        stage="leader_follower",
        leader_report=leader_report,
    )
    if report.closed_loop_spectral_abscissa >= 0:
        raise NotHurwitz("Leader-follower closed loop is not Hurwitz")
    logger.info("Leader-follower synthesis: H2 = %.6f", report.h2_norm)
    return report


def verify_controller_structure(K: GainMatrix, poset: Poset, tol: float = 1e-12) -> tuple[bool, list[tuple[str, str]]]:
    return in_block_incidence_algebra(K.K, K.row_partition, K.col_partition, poset, tol)
