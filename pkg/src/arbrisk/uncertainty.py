"""Price-uncertainty models estimated from historical day vectors.

Six representations: quantile and mean-std boxes, minimum-volume and
covariance ellipsoids, and per-hour normal/lognormal fits with moment
matching for weighted lognormal sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

import numpy as np

from .market_data import PriceDay


class NonPositiveMeanError(ValueError):
    """Weighted lognormal sum has non-positive mean; no lognormal match exists."""


class MveeConvergenceError(RuntimeError):
    """Minimum-volume ellipsoid fitting did not converge within the iteration cap."""


def day_matrix(days: Iterable[PriceDay] | np.ndarray) -> np.ndarray:
    """Stack training days into an (m, T) float matrix.

    Accepts PriceDay sequences or any array-like of equal-length price
    vectors, so estimators stay usable on arbitrary horizons.
    """
    if isinstance(days, np.ndarray):
        mat = np.atleast_2d(np.asarray(days, dtype=float))
    else:
        rows = [np.asarray(getattr(d, "prices", d), dtype=float) for d in days]
        mat = np.atleast_2d(np.asarray(rows, dtype=float))
    if mat.ndim != 2:
        raise ValueError("training days must form a 2-d matrix")
    return mat


def _require_min_days(mat: np.ndarray, n: int = 2) -> None:
    if mat.shape[0] < n:
        raise ValueError(f"need at least {n} training days, got {mat.shape[0]}")


def covariance_ridge(sigma: np.ndarray) -> float:
    """Regularization added to rank-deficient covariance-like matrices."""
    n = sigma.shape[0]
    return 1e-8 * float(np.trace(sigma)) / n


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True)
class HourlyStats:
    """Per-hour mean, sample std, and the empirical quantile function."""

    mean: np.ndarray
    std: np.ndarray
    sorted_samples: np.ndarray  # (m, T), each column ascending
    sample_count: int

    @property
    def horizon(self) -> int:
        return len(self.mean)

    def quantile(self, q: float) -> np.ndarray:
        """Empirical per-hour quantile, linearly interpolated at (m-1)*q."""
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile level must be in [0, 1], got {q}")
        return np.quantile(self.sorted_samples, q, axis=0)


def estimate_hourly_stats(train_days) -> HourlyStats:
    mat = day_matrix(train_days)
    _require_min_days(mat)
    return HourlyStats(
        mean=mat.mean(axis=0),
        std=mat.std(axis=0, ddof=1),
        sorted_samples=np.sort(mat, axis=0),
        sample_count=mat.shape[0],
    )


@dataclass(frozen=True)
class PolyhedralSet:
    """{x : rows @ x <= offsets}, with a designated interior center point."""

    rows: np.ndarray  # (k, T)
    offsets: np.ndarray  # (k,)
    center: np.ndarray  # (T,)

    @property
    def horizon(self) -> int:
        return self.rows.shape[1]

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.rows @ np.asarray(x, dtype=float) <= self.offsets + tol))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n points inside the set, drawn along random rays from the center."""
        T = self.horizon
        dirs = rng.standard_normal((n, T))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = dirs / np.where(norms > 0, norms, 1.0)
        slack = self.offsets - self.rows @ self.center  # >= 0 for a valid center
        along = dirs @ self.rows.T  # (n, k)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(along > 1e-15, slack[None, :] / along, np.inf)
        reach = np.minimum(ratios.min(axis=1), 1e12)
        steps = rng.uniform(0.0, 1.0, size=n) * reach
        return self.center[None, :] + dirs * steps[:, None]


def _box(lower: np.ndarray, upper: np.ndarray, center: np.ndarray) -> PolyhedralSet:
    T = len(lower)
    eye = np.eye(T)
    return PolyhedralSet(
        rows=np.vstack([eye, -eye]),
        offsets=np.concatenate([upper, -lower]),
        center=np.asarray(center, dtype=float),
    )


def build_poly_quantile(stats: HourlyStats, coverage: float) -> PolyhedralSet:
    """Per-hour quantile box at symmetric coverage around the median.

    coverage 0 collapses to the median point, coverage 1 spans the full
    sample range.
    """
    if not 0.0 <= coverage <= 1.0:
        raise ValueError(f"coverage must be in [0, 1], got {coverage}")
    lower = stats.quantile(0.5 - coverage / 2.0)
    upper = stats.quantile(0.5 + coverage / 2.0)
    return _box(lower, upper, stats.quantile(0.5))


def build_poly_mean_std(stats: HourlyStats, budget: float) -> PolyhedralSet:
    """Per-hour box mean +/- budget * std."""
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    spread = budget * stats.std
    return _box(stats.mean - spread, stats.mean + spread, stats.mean)


@dataclass(frozen=True)
class EllipsoidalSet:
    """{center + shape @ u : ||u|| <= 1} with a symmetric PSD shape matrix."""

    center: np.ndarray
    shape: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.center)

    @cached_property
    def _eig(self) -> tuple[np.ndarray, np.ndarray]:
        w, v = np.linalg.eigh((self.shape + self.shape.T) / 2.0)
        return np.clip(w, 0.0, None), v

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        w, v = self._eig
        y = v.T @ (np.asarray(x, dtype=float) - self.center)
        cutoff = max(float(w.max(initial=0.0)) * 1e-12, 1e-300)
        live = w > cutoff
        if np.any(np.abs(y[~live]) > tol * (1.0 + float(np.abs(self.center).max(initial=0.0)))):
            return False
        return bool(np.sum((y[live] / w[live]) ** 2) <= 1.0 + tol)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        T = self.horizon
        dirs = rng.standard_normal((n, T))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = dirs / np.where(norms > 0, norms, 1.0)
        radii = rng.uniform(0.0, 1.0, size=n) ** (1.0 / T)
        return self.center[None, :] + (dirs * radii[:, None]) @ self.shape.T


def scale_ellipsoid(eset: EllipsoidalSet, budget: float) -> EllipsoidalSet:
    """Scale the set radius by a nonnegative budget about its center."""
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    return EllipsoidalSet(center=eset.center, shape=budget * eset.shape)


def build_ellip_cov(train_days, budget: float) -> EllipsoidalSet:
    """Covariance ellipsoid: center at the mean day, shape budget * Sigma^(1/2)."""
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    mat = day_matrix(train_days)
    _require_min_days(mat)
    center = mat.mean(axis=0)
    sigma = np.cov(mat, rowvar=False, ddof=1)
    sigma = np.atleast_2d(sigma)
    sigma = sigma + covariance_ridge(sigma) * np.eye(sigma.shape[0])
    return EllipsoidalSet(center=center, shape=budget * _psd_sqrt(sigma))


def mvee(points, tol: float = 1e-6, max_iter: int = 100_000) -> EllipsoidalSet:
    """Minimum-volume enclosing ellipsoid via Khachiyan weight updates.

    Runs the dual weight iteration (with away steps on active support
    weights) until the largest dual violation drops below `tol`, then
    rescales so the farthest point sits on the boundary.  Degenerate
    directions are regularized with the covariance ridge, so the returned
    shape is always symmetric PSD and all points are contained.
    """
    pts = day_matrix(points)
    m, T = pts.shape
    spread = float(np.max(np.abs(pts - pts[0]))) if m > 1 else 0.0
    if m == 1 or spread <= 1e-12 * max(1.0, float(np.max(np.abs(pts[0])))):
        return EllipsoidalSet(center=pts.mean(axis=0), shape=np.zeros((T, T)))

    d = T
    lifted = np.hstack([pts, np.ones((m, 1))])  # (m, d+1)
    u = np.full(m, 1.0 / m)

    def refresh(weights: np.ndarray):
        V = lifted.T @ (weights[:, None] * lifted)
        jitter = 0.0
        for _ in range(60):
            try:
                Vinv = np.linalg.inv(V + jitter * np.eye(d + 1))
                break
            except np.linalg.LinAlgError:
                jitter = max(2.0 * jitter, 1e-14 * max(float(np.trace(V)) / (d + 1), 1e-30))
        else:  # pragma: no cover - extreme degeneracy
            Vinv = np.linalg.pinv(V)
        M = np.einsum("ij,jk,ik->i", lifted, Vinv, lifted)
        return Vinv, M

    Vinv, M = refresh(u)
    converged = False
    for it in range(max_iter):
        jmax = int(np.argmax(M))
        plus_gap = M[jmax] / (d + 1) - 1.0
        if plus_gap < tol:
            converged = True
            break
        active = u > 1e-12
        jmin = int(np.flatnonzero(active)[np.argmin(M[active])])
        minus_gap = 1.0 - M[jmin] / (d + 1)
        if plus_gap >= minus_gap:
            j, Mj = jmax, M[jmax]
            step = (Mj - d - 1.0) / ((d + 1.0) * (Mj - 1.0))
        else:
            j, Mj = jmin, M[jmin]
            step = (Mj - d - 1.0) / ((d + 1.0) * (Mj - 1.0))
            step = max(step, -u[j] / (1.0 - u[j]))
        denom = 1.0 + step * (Mj - 1.0)
        if denom <= 1e-12 or not np.isfinite(denom):
            Vinv, M = refresh(u)
            continue
        w = Vinv @ lifted[j]
        v = lifted @ w
        u = u * (1.0 - step)
        u[j] += step
        np.clip(u, 0.0, None, out=u)
        M = (M - (step / denom) * v**2) / (1.0 - step)
        Vinv = (Vinv - (step / denom) * np.outer(w, w)) / (1.0 - step)
        if (it + 1) % 4096 == 0:
            u = u / u.sum()
            Vinv, M = refresh(u)
    if not converged:
        raise MveeConvergenceError(
            f"no convergence to tol={tol} within {max_iter} iterations"
        )

    u = u / u.sum()
    center = u @ pts
    centered = pts - center
    sigma_u = centered.T @ (u[:, None] * centered)
    sigma_u = sigma_u + covariance_ridge(sigma_u) * np.eye(T)
    dist = np.einsum("ij,ji->i", centered, np.linalg.solve(sigma_u, centered.T))
    dmax = float(np.max(dist))
    if dmax <= 1e-14:
        return EllipsoidalSet(center=center, shape=_psd_sqrt(sigma_u))
    return EllipsoidalSet(center=center, shape=np.sqrt(dmax) * _psd_sqrt(sigma_u))


@dataclass(frozen=True)
class NormalModel:
    """Independent per-hour normal price model."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.mean)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=(n, self.horizon))


@dataclass(frozen=True)
class LogNormalModel:
    """Independent per-hour lognormal price model fitted on clipped prices."""

    log_mean: np.ndarray
    log_std: np.ndarray
    clip_floor: float

    @property
    def horizon(self) -> int:
        return len(self.log_mean)

    @property
    def hourly_means(self) -> np.ndarray:
        return np.exp(self.log_mean + self.log_std**2 / 2.0)

    @property
    def hourly_variances(self) -> np.ndarray:
        s2 = self.log_std**2
        return (np.exp(s2) - 1.0) * np.exp(2.0 * self.log_mean + s2)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.exp(rng.normal(self.log_mean, self.log_std, size=(n, self.horizon)))


def fit_normal(train_days) -> NormalModel:
    mat = day_matrix(train_days)
    _require_min_days(mat)
    return NormalModel(mean=mat.mean(axis=0), std=mat.std(axis=0, ddof=1))


def fit_lognormal(train_days, clip_floor: float = 0.01) -> LogNormalModel:
    """Fit per-hour lognormal parameters on log(max(price, clip_floor))."""
    if not clip_floor > 0:
        raise ValueError(f"clip_floor must be > 0, got {clip_floor}")
    mat = day_matrix(train_days)
    _require_min_days(mat)
    logs = np.log(np.maximum(mat, clip_floor))
    return LogNormalModel(
        log_mean=logs.mean(axis=0), log_std=logs.std(axis=0, ddof=1), clip_floor=clip_floor
    )


def fw_moment_match(model: LogNormalModel, weights: np.ndarray) -> tuple[float, float]:
    """Match the weighted hourly-lognormal sum to a single lognormal.

    Computes the exact first two moments of Z = sum(weights * price) under
    hour independence and returns (mu, sigma) of the lognormal with those
    moments.  Raises NonPositiveMeanError when the mean of Z is <= 0.
    """
    x = np.asarray(weights, dtype=float)
    if x.shape != (model.horizon,):
        raise ValueError("weight vector length does not match the model horizon")
    mean_z = float(x @ model.hourly_means)
    var_z = float((x**2) @ model.hourly_variances)
    if mean_z <= 0:
        raise NonPositiveMeanError(f"weighted sum has mean {mean_z} <= 0")
    if var_z <= 0:
        return float(np.log(mean_z)), 0.0
    sigma_sq = float(np.log1p(var_z / mean_z**2))
    mu = float(np.log(mean_z) - sigma_sq / 2.0)
    return mu, float(np.sqrt(sigma_sq))


UncertaintyModel = Union[PolyhedralSet, EllipsoidalSet, NormalModel, LogNormalModel]


def model_to_dict(model: UncertaintyModel) -> dict:
    """Kind-tagged JSON-ready representation of a fitted model."""
    if isinstance(model, PolyhedralSet):
        return {
            "kind": "polyhedral",
            "rows": model.rows.tolist(),
            "offsets": model.offsets.tolist(),
            "center": model.center.tolist(),
        }
    if isinstance(model, EllipsoidalSet):
        return {
            "kind": "ellipsoidal",
            "center": model.center.tolist(),
            "shape": model.shape.tolist(),
        }
    if isinstance(model, NormalModel):
        return {"kind": "normal", "mean": model.mean.tolist(), "std": model.std.tolist()}
    if isinstance(model, LogNormalModel):
        return {
            "kind": "lognormal",
            "log_mean": model.log_mean.tolist(),
            "log_std": model.log_std.tolist(),
            "clip_floor": model.clip_floor,
        }
    raise TypeError(f"not an uncertainty model: {type(model).__name__}")


def model_from_dict(doc: dict) -> UncertaintyModel:
    kind = doc.get("kind")
    if kind == "polyhedral":
        return PolyhedralSet(
            rows=np.asarray(doc["rows"], dtype=float),
            offsets=np.asarray(doc["offsets"], dtype=float),
            center=np.asarray(doc["center"], dtype=float),
        )
    if kind == "ellipsoidal":
        return EllipsoidalSet(
            center=np.asarray(doc["center"], dtype=float),
            shape=np.asarray(doc["shape"], dtype=float),
        )
    if kind == "normal":
        return NormalModel(
            mean=np.asarray(doc["mean"], dtype=float), std=np.asarray(doc["std"], dtype=float)
        )
    if kind == "lognormal":
        return LogNormalModel(
            log_mean=np.asarray(doc["log_mean"], dtype=float),
            log_std=np.asarray(doc["log_std"], dtype=float),
            clip_floor=float(doc["clip_floor"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")
