"""Log-coordinate grids and time-indexed fields on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid in (x, y) = (ln K, ln N); node (i, j) sits at (x_i, y_j)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("grid needs nx >= 3 and ny >= 3")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("grid bounds must satisfy x_max > x_min and y_max > y_min")

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y_min + self.hy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def interior_mask(self, margin: float) -> np.ndarray:
        """Nodes at least ``margin`` * range away from every edge."""
        X, Y = self.mesh()
        mx = margin * (self.x_max - self.x_min)
        my = margin * (self.y_max - self.y_min)
        tol = 1e-12
        return ((X >= self.x_min + mx - tol) & (X <= self.x_max - mx + tol)
                & (Y >= self.y_min + my - tol) & (Y <= self.y_max - my + tol))

    def refined(self) -> "Grid2D":
        """Same box with the spacings halved."""
        return Grid2D(self.x_min, self.x_max, self.y_min, self.y_max, 2 * self.nx - 1, 2 * self.ny - 1)


def build_grid(bounds, nx: int, ny: int) -> Grid2D:
    """``bounds`` is ((x_min, x_max), (y_min, y_max)) or a single (lo, hi) pair for both."""
    b = np.asarray(bounds, dtype=float)
    if b.shape == (2,):
        b = np.array([b, b])
    return Grid2D(float(b[0, 0]), float(b[0, 1]), float(b[1, 0]), float(b[1, 1]), int(nx), int(ny))


@dataclass
class Field:
    """Scalar field sampled at ``times`` (length nt) on ``grid``; values have shape (nt, nx, ny).

    ``dt_pde`` is the internal time step of the solve that produced it.
    """

    grid: Grid2D
    times: np.ndarray
    values: np.ndarray
    quantity: str = "lambda"
    dt_pde: float = float("nan")

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times), self.grid.nx, self.grid.ny):
            raise ValueError("field values must have shape (nt, nx, ny)")

    @property
    def nt(self) -> int:
        return len(self.times)

    @property
    def positive(self) -> bool:
        return self.quantity in ("lambda", "psi")

    def slice_at(self, t: float) -> np.ndarray:
        """Linear-in-time interpolation of a whole slice."""
        i, w = _time_weights(self.times, t)
        return (1.0 - w) * self.values[i] + w * self.values[i + 1] if w else self.values[i].copy()

    def interpolate(self, t, x, y):
        """Value at (t, x, y); bilinear in space, linear in time.

        Positive fields are interpolated in log space, which is exact for pure
        power laws in N/K.  Points outside the box are projected onto it.
        """
        x = np.clip(np.asarray(x, dtype=float), self.grid.x_min, self.grid.x_max)
        y = np.clip(np.asarray(y, dtype=float), self.grid.y_min, self.grid.y_max)
        fx = (x - self.grid.x_min) / self.grid.hx
        fy = (y - self.grid.y_min) / self.grid.hy
        i = np.minimum(np.floor(fx).astype(int), self.grid.nx - 2)
        jj = np.minimum(np.floor(fy).astype(int), self.grid.ny - 2)
        wx = fx - i
        wy = fy - jj
        k, wt = _time_weights(self.times, float(t))

        def spatial(V):
            return ((1 - wx) * (1 - wy) * V[i, jj] + wx * (1 - wy) * V[i + 1, jj]
                    + (1 - wx) * wy * V[i, jj + 1] + wx * wy * V[i + 1, jj + 1])

        V0 = self.values[k]
        V1 = self.values[k + 1] if wt else None
        if self.positive:
            out = spatial(np.log(V0))
            if wt:
                out = (1 - wt) * out + wt * spatial(np.log(V1))
            return np.exp(out)
        out = spatial(V0)
        if wt:
            out = (1 - wt) * out + wt * spatial(V1)
        return out

    def evaluator(self):
        """Callable (t, K, N) -> value, for the simulation modules."""
        return lambda t, K, N: self.interpolate(t, np.log(K), np.log(N))

    def to_csv(self, path, time_stride: int = 1):
        """Dump as ``t,x,y,K,N,value`` rows, row-major t -> x -> y, 17 significant digits."""
        g = self.grid
        X, Y = g.mesh()
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "K", "N", "value"])
            for k in range(0, self.nt, time_stride):
                t = self.times[k]
                V = self.values[k]
                for a in range(g.nx):
                    for b in range(g.ny):
                        w.writerow([f"{v:.17g}" for v in (t, X[a, b], Y[a, b], np.exp(X[a, b]),
                                                         np.exp(Y[a, b]), V[a, b])])


def _time_weights(times, t):
    if t <= times[0]:
        return 0, 0.0
    if t >= times[-1]:
        return len(times) - 1, 0.0
    i = int(np.searchsorted(times, t, side="right") - 1)
    i = min(i, len(times) - 2)
    w = (t - times[i]) / (times[i + 1] - times[i])
    if w <= 1e-14:
        return i, 0.0
    if w >= 1 - 1e-14:
        return i + 1, 0.0
    return i, w


def read_field_csv(path, quantity="lambda") -> Field:
    """Inverse of :meth:`Field.to_csv` for dumps written with ``time_stride=1``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    ts = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    ys = np.unique(data[:, 2])
    grid = Grid2D(xs[0], xs[-1], ys[0], ys[-1], len(xs), len(ys))
    return Field(grid, ts, data[:, 5].reshape(len(ts), len(xs), len(ys)), quantity)
