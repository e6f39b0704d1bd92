"""Dynamic geometric graphs over agent positions, six centralities and the
BMI / BTI / BCI behavior indices derived from them."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

CENTRALITY_NAMES = ("degree", "closeness", "eigenvector", "betweenness", "power", "katz")

# relative tolerance for deciding two weighted path lengths are equal
PATH_RTOL = 1e-9


class DivergentAttenuation(ValueError):
    pass


class TruncationWarning(RuntimeWarning):
    pass


@dataclass
class GraphSnapshot:
    positions: np.ndarray
    adjacency: np.ndarray
    r: float

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def degrees(self) -> np.ndarray:
        return (self.adjacency > 0).sum(axis=1)

    @classmethod
    def from_adjacency(cls, adjacency, r: float | None = None) -> "GraphSnapshot":
        A = np.asarray(adjacency, dtype=np.float64)
        if not np.array_equal(A, A.T) or np.any(np.diag(A) != 0):
            raise ValueError("adjacency must be symmetric with zero diagonal")
        if r is None:
            r = float(A.max()) if A.size and A.max() > 0 else 1.0
        return cls(np.full((len(A), 2), np.nan), A, r)


def build_graph(positions, r: float = 25.0) -> GraphSnapshot:
    """Distance-weighted proximity graph: A[i, j] = d(i, j) when 0 < d <= r."""
    if not r > 0:
        raise ValueError("radius must be positive")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    # symmetrize explicitly so rounding in hypot can never break A == A.T
    d = np.minimum(d, d.T)
    A = np.where((d > 0) & (d <= r), d, 0.0)
    np.fill_diagonal(A, 0.0)
    return GraphSnapshot(pos, A, r)


# ---------------------------------------------------------------- centralities


def degree_centrality(g: GraphSnapshot, prev=None) -> np.ndarray:
    prev = np.zeros(g.n) if prev is None else np.asarray(prev, dtype=np.float64)
    return g.degrees().astype(np.float64) + prev


def closeness_centrality(g: GraphSnapshot) -> np.ndarray:
    deg = g.degrees()
    total = g.adjacency.sum(axis=1)
    out = np.zeros(g.n)
    ok = deg > 1
    out[ok] = (deg[ok] - 1) / total[ok]
    return out


def spectral_radius(A: np.ndarray, tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric non-negative matrix by power iteration.

    Iterates on A + I so that bipartite graphs (eigenvalues +-lambda) still
    converge, and returns the Rayleigh quotient minus the shift.
    """
    A = np.asarray(A, dtype=np.float64)
    n = len(A)
    if n == 0 or not np.any(A):
        return 0.0
    shift = 1.0 * max(float(A.max()), 1.0)
    M = A + shift * np.eye(n)
    x = np.ones(n) / math.sqrt(n)
    lam = x @ M @ x
    for _ in range(max_iter):
        y = M @ x
        x_new = y / np.linalg.norm(y)
        lam_new = x_new @ M @ x_new
        # the Rayleigh quotient error is quadratic in the vector error, so a
        # stalled quotient at 1e-3 * tol leaves lambda well inside tol
        if abs(lam_new - lam) <= 1e-3 * tol * abs(lam_new):
            lam = lam_new
            break
        x, lam = x_new, lam_new
    else:
        warnings.warn("power iteration did not converge", TruncationWarning, stacklevel=2)
    return float(lam - shift)


def eigenvector_centrality(g: GraphSnapshot) -> np.ndarray:
    """Neighbor distance sum divided by the adjacency spectral radius."""
    lam = spectral_radius(g.adjacency)
    if lam == 0:
        lam = 1.0
    return g.adjacency.sum(axis=1) / lam


def _all_pairs_shortest(A: np.ndarray):
    """Floyd-Warshall distances on the weighted graph (inf when unreachable)."""
    n = len(A)
    D = np.where(A > 0, A, np.inf)
    np.fill_diagonal(D, 0.0)
    for k in range(n):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :])
    return D


def _path_equal(x: float, y: float) -> bool:
    return math.isclose(x, y, rel_tol=PATH_RTOL, abs_tol=0.0)


def _shortest_path_counts(A: np.ndarray, D: np.ndarray) -> list[list[int]]:
    """sigma[s][t]: number of distinct shortest s-t paths."""
    n = len(A)
    sigma = [[0] * n for _ in range(n)]
    for s in range(n):
        order = sorted((v for v in range(n) if math.isfinite(D[s, v])), key=lambda v: D[s, v])
        sigma[s][s] = 1
        for v in order:
            if v == s:
                continue
            sigma[s][v] = sum(
                sigma[s][u]
                for u in range(n)
                if A[u, v] > 0 and math.isfinite(D[s, u]) and D[s, u] < D[s, v] and _path_equal(D[s, u] + A[u, v], D[s, v])
            )
    return sigma


def betweenness_centrality(g: GraphSnapshot) -> np.ndarray:
    """Weighted betweenness over unordered source/target pairs.

    Sums are carried as exact fractions of integer path counts.
    """
    n = g.n
    A = g.adjacency
    D = _all_pairs_shortest(A)
    sigma = _shortest_path_counts(A, D)
    out = []
    for i in range(n):
        total = Fraction(0)
        for s in range(n):
            for t in range(s + 1, n):
                if i in (s, t) or not math.isfinite(D[s, t]):
                    continue
                if _path_equal(D[s, i] + D[i, t], D[s, t]):
                    total += Fraction(sigma[s][i] * sigma[i][t], sigma[s][t])
        out.append(float(total))
    return np.array(out)


def _tail_bound(norm: float, k: int) -> float:
    # norm**(k+1) / (k+1)! computed in log space
    if norm == 0:
        return 0.0
    return math.exp((k + 1) * math.log(norm) - math.lgamma(k + 2))


def power_centrality(g: GraphSnapshot, K: int = 32, tol: float = 1e-9, adaptive: bool = True) -> np.ndarray:
    """sum_{k=1..K} (A^k)_ii / k!.

    With ``adaptive`` the sum stops as soon as the remainder bound
    ||A||_inf^(k+1) / (k+1)! drops below ``tol``; K is then only a cap.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    A = g.adjacency
    norm = float(np.abs(A).sum(axis=1).max()) if g.n else 0.0
    out = np.zeros(g.n)
    term = np.eye(g.n)
    for k in range(1, K + 1):
        term = term @ A / k
        out += np.diag(term)
        if adaptive and _tail_bound(norm, k) < tol:
            return out
    if adaptive and _tail_bound(norm, K) >= tol:
        warnings.warn(f"power centrality truncated at K={K} with tail bound above {tol}", TruncationWarning, stacklevel=2)
    return out


def katz_centrality(g: GraphSnapshot, alpha: float | None = None, beta: float = 0.0, K: int = 256, tol: float = 1e-13) -> np.ndarray:
    """sum_{k=1..K} [alpha^k (A^k 1)_i + beta^k].

    ``alpha`` defaults to half the reciprocal spectral radius; alpha at or
    above the reciprocal raises :class:`DivergentAttenuation`.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    lam = spectral_radius(g.adjacency)
    if alpha is None:
        alpha = 0.5 / lam if lam > 0 else 0.0
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if lam > 0 and alpha * lam >= 1:
        raise DivergentAttenuation(f"alpha={alpha} >= 1/lambda_max={1 / lam}")
    out = np.zeros(g.n)
    walk = np.ones(g.n)
    beta_k = 1.0
    for k in range(1, K + 1):
        walk = alpha * (g.adjacency @ walk)
        beta_k *= beta
        out += walk + beta_k
        if np.max(np.abs(walk), initial=0.0) <= tol * max(1.0, np.max(np.abs(out), initial=0.0)) and abs(beta_k) <= tol:
            return out
    warnings.warn(f"katz centrality truncated at K={K}", TruncationWarning, stacklevel=2)
    return out


@dataclass
class CentralityConfig:
    r: float = 25.0
    power_K: int = 32
    katz_alpha: float | None = None
    katz_beta: float = 0.0
    katz_K: int = 256


def centrality_series(position_frames, cfg: CentralityConfig = CentralityConfig()) -> np.ndarray:
    """(frames, n, 6) centralities; degree accumulates from zero at frame 0."""
    frames = []
    deg = None
    for pos in position_frames:
        g = build_graph(pos, cfg.r)
        deg = degree_centrality(g, deg)
        frames.append(np.column_stack([
            deg,
            closeness_centrality(g),
            eigenvector_centrality(g),
            betweenness_centrality(g),
            power_centrality(g, cfg.power_K),
            katz_centrality(g, cfg.katz_alpha, cfg.katz_beta, cfg.katz_K),
        ]))
    return np.stack(frames)


# ---------------------------------------------------------------- indices


@dataclass
class BehaviorIndices:
    bmi: np.ndarray
    bti: np.ndarray
    bci: np.ndarray

    def stacked(self) -> np.ndarray:
        """(frames, 18): BMI, BTI, BCI concatenated per frame."""
        return np.concatenate([self.bmi, self.bti, self.bci], axis=-1)


def first_difference(c: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(c)
    out[1:-1] = (c[2:] - c[:-2]) / (2 * dt)
    out[0] = (c[1] - c[0]) / dt
    out[-1] = (c[-1] - c[-2]) / dt
    return out


def second_difference(c: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(c)
    out[1:-1] = (c[2:] - 2 * c[1:-1] + c[:-2]) / dt**2
    # one-sided at the ends: the three-point stencil anchored at the edge
    out[0] = (c[2] - 2 * c[1] + c[0]) / dt**2
    out[-1] = (c[-1] - 2 * c[-2] + c[-3]) / dt**2
    return out


def behavior_indices(centralities, dt: float) -> BehaviorIndices:
    """Magnitude, |first derivative| and |second derivative| over frames.

    ``centralities`` has frames on axis 0 (e.g. (frames, 6)).
    """
    c = np.asarray(centralities, dtype=np.float64)
    if len(c) < 3:
        raise ValueError("behavior indices need at least 3 frames")
    if not dt > 0:
        raise ValueError("dt must be positive")
    return BehaviorIndices(np.abs(c), np.abs(first_difference(c, dt)), np.abs(second_difference(c, dt)))
