"""Reference solutions and the error metric.

* heat: separation-of-variables Fourier series (factorised into x and y parts)
* Burgers: Fourier pseudo-spectral in x with 2/3 dealiasing, classical RK4 in t
* consolidation: coupled (u, p) finite differences, implicit BDF2 in t
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .autodiff import hyperdual as hd
from .errors import NumericError, ShapeError, SolverDivergenceError

# -- heat ------------------------------------------------------------------------


def _odd(terms: int) -> np.ndarray:
    if terms < 1:
        raise ValueError("terms must be >= 1")
    return np.arange(1, terms + 1, 2, dtype=np.float64)


def heat_factor(x, t, alpha, terms: int = 199) -> np.ndarray:
    """``F(x, t) = sum_{m odd} 4/(m pi) sin(m pi x) exp(-alpha m^2 pi^2 t)``.

    The square-plate solution for a constant initial temperature is
    ``T0 * F(x, t) * F(y, t)``.
    """
    m = _odd(terms)
    x, t, alpha = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (x, t, alpha)))
    x = x[..., None]
    decay = np.exp(-alpha[..., None] * (m * np.pi) ** 2 * t[..., None])
    mx = m * x
    # sin(k pi) is not exactly 0 in floating point; the edges must be
    mode = np.where(mx == np.round(mx), 0.0, np.sin(np.pi * mx))
    return np.sum(4.0 / (m * np.pi) * mode * decay, axis=-1)


def heat_analytic(T0, alpha, x, y, t, terms: int = 199) -> np.ndarray:
    """Temperature on the unit square with zero edges and uniform initial value ``T0``.

    Sums odd ``m, n <= terms`` of ``16 T0 / (m n pi^2) sin(m pi x) sin(n pi y)
    exp(-alpha (m^2 + n^2) pi^2 t)``. All arguments broadcast.
    """
    return np.asarray(T0, dtype=np.float64) * heat_factor(x, t, alpha, terms) * heat_factor(y, t, alpha, terms)


def _modal(x):
    """Append a trailing mode axis (works on arrays and hyper-duals)."""
    if isinstance(x, hd.HyperDual):
        return x.map_linear(lambda v: v[..., None])
    return np.asarray(x)[..., None]


def heat_field(terms: int = 199):
    """The heat series as ``fn(T0_batch, [x, y, t, c])`` for closed-form evaluators.

    Accepts hyper-dual coordinates, so derivatives are exact up to truncation.
    """
    m = _odd(terms)
    amp = 4.0 / (m * np.pi)

    def factor(s, t, c):
        decay = hd.exp(_modal(c * c * t) * (-((m * np.pi) ** 2)))
        return (hd.sin(_modal(s) * (m * np.pi)) * decay * amp).sum(axis=-1)

    def fn(T0_batch, coords):
        x, y, t, c = coords
        T0 = np.asarray(T0_batch, dtype=np.float64).reshape((-1,) + (1,) * 4)
        return factor(x, t, c) * factor(y, t, c) * T0

    return fn


# -- Burgers ---------------------------------------------------------------------


def burgers_solve(
    u0,
    nu: float = 0.01,
    modes: int = 256,
    dt: float = 1e-4,
    t_eval=None,
    x_eval=None,
) -> np.ndarray:
    """Periodic viscous Burgers ``s_t + s s_x = nu s_xx`` on ``[0, 1)``.

    ``u0`` holds samples on ``linspace(0, 1, n)`` including the repeated
    endpoint; leading dimensions are solved as a batch. Returns
    ``[..., len(x_eval), len(t_eval)]`` (defaults: 101 x 101 uniform on the unit
    square).
    """
    u0 = np.asarray(u0, dtype=np.float64)
    t_eval = np.linspace(0.0, 1.0, 101) if t_eval is None else np.asarray(t_eval, dtype=np.float64)
    x_eval = np.linspace(0.0, 1.0, 101) if x_eval is None else np.asarray(x_eval, dtype=np.float64)
    if u0.shape[-1] < 3:
        raise ShapeError("need at least 3 initial samples")
    batch = u0.shape[:-1]
    u0 = u0.reshape(-1, u0.shape[-1])
    n_in = u0.shape[-1] - 1  # drop the periodic duplicate at x = 1

    # interpolate onto the solver grid spectrally (exact for band-limited data)
    c_in = np.fft.rfft(u0[:, :n_in], axis=-1) / n_in
    if n_in % 2 == 0:
        c_in[:, -1] = 0.0  # Nyquist term has no unique real continuation
    nk = modes // 2 + 1
    state = np.zeros((u0.shape[0], nk), dtype=np.complex128)
    keep = min(nk, c_in.shape[1])
    state[:, :keep] = c_in[:, :keep] * modes

    k = np.arange(nk)
    ik = 2j * np.pi * k
    lap = -((2 * np.pi * k) ** 2)
    dealias = (k <= modes // 3).astype(np.float64)
    state *= dealias

    def rhs(c):
        u = np.fft.irfft(c, n=modes, axis=-1)
        return -0.5 * ik * np.fft.rfft(u * u, axis=-1) * dealias + nu * lap * c

    # synthesis matrix onto the evaluation abscissae
    weights = np.full(nk, 2.0)
    weights[0] = 1.0
    if modes % 2 == 0:
        weights[-1] = 1.0
    basis = weights[:, None] * np.exp(2j * np.pi * np.outer(k, x_eval)) / modes

    if np.any(np.diff(t_eval) < 0) or np.any(t_eval < 0):
        raise ValueError("t_eval must be non-negative and increasing")

    def rk4(c, h):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * h * k1)
        k3 = rhs(c + 0.5 * h * k2)
        k4 = rhs(c + h * k3)
        return c + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    out = np.empty((u0.shape[0], len(x_eval), len(t_eval)))
    n = 0
    tol = 1e-9 * dt
    for j, target in enumerate(t_eval):
        while (n + 1) * dt <= target + tol:
            state = rk4(state, dt)
            n += 1
        rest = target - n * dt
        # off-grid times get one shorter step on a copy; the main trajectory stays on the grid
        snap = rk4(state, rest) if rest > tol else state
        if not np.all(np.isfinite(snap)):
            raise SolverDivergenceError(f"Burgers state became non-finite before t={target}")
        out[:, :, j] = np.real(snap @ basis)
    return out.reshape(batch + out.shape[1:])


# -- consolidation -----------------------------------------------------------------


def biot_solve(
    f_t,
    nz: int = 201,
    nt: int = 2001,
    z_eval=None,
    t_eval=None,
    length: float = 1.0,
    modulus: float = 3.0,
    conductivity: float = 1.0,
    t_final: float = 1.0,
    scheme: str = "bdf2",
) -> tuple[np.ndarray, np.ndarray]:
    """One-dimensional consolidation under a time-varying surface load.

    Unknowns ``u, p`` on ``nz`` nodes solve, at each implicit step,
    ``modulus u_zz - p_z = 0`` and ``(u_z)_t - conductivity p_zz = 0`` with
    central differences, ``p(0)=0``, surface traction
    ``modulus u_z(0) - p(0) = -f``, ``u(L)=0`` and ``p_z(L)=0`` (one-sided,
    second order). Initial state ``u=0``, ``p=f(0)``.

    ``scheme="euler"`` is plain backward Euler. The default ``"bdf2"`` takes
    one backward-Euler step and then second-order backward differences; at
    ``nt=2001`` Euler's first-order error in the initial layer of a step load
    is several times 1e-3, BDF2's is well below.

    ``f_t`` holds the load on ``linspace(0, t_final, m)`` (linearly
    interpolated); leading dimensions are batched. ``modulus`` is
    ``lambda + 2 mu`` and ``conductivity`` is ``k / (rho g)``. Returns ``(u, p)``,
    each ``[..., len(z_eval), len(t_eval)]``.
    """
    f_t = np.asarray(f_t, dtype=np.float64)
    z_eval = np.linspace(0.0, length, 101) if z_eval is None else np.asarray(z_eval, dtype=np.float64)
    t_eval = np.linspace(0.0, t_final, 101) if t_eval is None else np.asarray(t_eval, dtype=np.float64)
    if nz < 4 or nt < 2:
        raise ValueError("grid too coarse")
    batch = f_t.shape[:-1]
    loads = f_t.reshape(-1, f_t.shape[-1])
    n_load = loads.shape[0]
    sensor_t = np.linspace(0.0, t_final, f_t.shape[-1])
    t_grid = np.linspace(0.0, t_final, nt)
    z = np.linspace(0.0, length, nz)
    h = z[1] - z[0]
    dt = t_grid[1] - t_grid[0]
    f_grid = np.stack([np.interp(t_grid, sensor_t, row) for row in loads], axis=1)  # [nt, B]

    if scheme not in ("euler", "bdf2"):
        raise ValueError(f"unknown scheme {scheme!r}")
    n = nz
    iu = np.arange(n)
    ip = n + np.arange(n)

    def assemble(gamma):
        """System matrix when the storage term is ``gamma * (u_z)^{new} / dt + ...``."""
        rows, cols, vals = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        # z = 0: drained surface and traction
        put(0, ip[0], 1.0)
        for c, w in zip((0, 1, 2), (-3.0, 4.0, -1.0)):
            put(1, iu[c], modulus * w / (2 * h))
        put(1, ip[0], -1.0)
        # interior: equilibrium and storage
        d1_rows = []  # rows whose previous-step u enters the right-hand side
        for i in range(1, n - 1):
            r = 2 * i
            put(r, iu[i - 1], modulus / h**2)
            put(r, iu[i], -2 * modulus / h**2)
            put(r, iu[i + 1], modulus / h**2)
            put(r, ip[i - 1], 1.0 / (2 * h))
            put(r, ip[i + 1], -1.0 / (2 * h))
            r += 1
            d1_rows.append(r)
            put(r, iu[i - 1], -gamma / (2 * h * dt))
            put(r, iu[i + 1], gamma / (2 * h * dt))
            put(r, ip[i - 1], -conductivity / h**2)
            put(r, ip[i], 2 * conductivity / h**2)
            put(r, ip[i + 1], -conductivity / h**2)
        # z = L: fixed base, impermeable
        r = 2 * (n - 1)
        put(r, iu[n - 1], 1.0)
        for c, w in zip((n - 1, n - 2, n - 3), (3.0, -4.0, 1.0)):
            put(r + 1, ip[c], w / (2 * h))
        A = sp.csc_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
        try:
            return spla.splu(A), np.asarray(d1_rows)
        except RuntimeError as exc:
            raise NumericError(f"consolidation system is singular: {exc}") from exc

    lu_euler, d1_rows = assemble(1.0)
    lu_bdf2 = assemble(1.5)[0] if scheme == "bdf2" else None

    interior = np.arange(1, n - 1)
    u = np.zeros((n, n_load))
    p = np.tile(f_grid[0], (n, 1))
    p[0] = 0.0  # drained surface takes precedence at the corner

    if np.any(t_eval < 0) or np.any(t_eval > t_final * (1 + 1e-12)):
        raise ValueError("t_eval must lie in [0, t_final]")
    # off-grid times are interpolated linearly between the bracketing steps
    pos = np.clip(t_eval / dt, 0, nt - 1)
    lo = np.minimum(np.floor(pos + 1e-9).astype(int), nt - 1)
    frac = np.where(pos - lo > 1e-9, pos - lo, 0.0)
    hi = np.minimum(lo + (frac > 0), nt - 1)
    u_hist = np.zeros((n_load, n, len(t_eval)))
    p_hist = np.zeros_like(u_hist)
    weights: dict[int, list] = {}
    for j in range(len(t_eval)):
        weights.setdefault(int(lo[j]), []).append((j, 1.0 - frac[j]))
        if frac[j] > 0:
            weights.setdefault(int(hi[j]), []).append((j, frac[j]))

    def record(step, u, p):
        for j, w in weights.get(step, ()):
            u_hist[:, :, j] += w * u.T
            p_hist[:, :, j] += w * p.T

    record(0, u, p)
    rhs = np.zeros((2 * n, n_load))
    u_prev = u
    for step in range(1, nt):
        rhs[:] = 0.0
        rhs[1] = -f_grid[step]
        uz = (u[interior + 1] - u[interior - 1]) / (2 * h * dt)
        if lu_bdf2 is not None and step > 1:
            uz_prev = (u_prev[interior + 1] - u_prev[interior - 1]) / (2 * h * dt)
            rhs[d1_rows] = 2.0 * uz - 0.5 * uz_prev
            lu = lu_bdf2
        else:
            rhs[d1_rows] = uz
            lu = lu_euler
        sol = lu.solve(rhs)
        u_prev = u
        u, p = sol[:n], sol[n:]
        record(step, u, p)
    if not (np.all(np.isfinite(u_hist)) and np.all(np.isfinite(p_hist))):
        raise SolverDivergenceError("consolidation solution became non-finite")

    def resample(hist):
        out = np.empty((n_load, len(z_eval), len(t_eval)))
        for b in range(n_load):
            for j in range(len(t_eval)):
                out[b, :, j] = np.interp(z_eval, z, hist[b, :, j])
        return out.reshape(batch + out.shape[1:])

    return resample(u_hist), resample(p_hist)


def terzaghi_pressure(z, t, terms: int = 2001, c_v: float = 3.0, length: float = 1.0) -> np.ndarray:
    """Excess pore pressure under a unit step load (drained top, impermeable base)."""
    k = _odd(terms)
    z, t = np.broadcast_arrays(np.asarray(z, dtype=np.float64), np.asarray(t, dtype=np.float64))
    s = k * np.pi / (2 * length)
    series = 4.0 / (k * np.pi) * np.sin(s * z[..., None]) * np.exp(-c_v * s**2 * t[..., None])
    return series.sum(axis=-1)


def biot_ramp_solution(z, t, terms: int = 401) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(u, p)`` for the linear ramp load ``f(t) = t`` with unit constants.

    With ``s_k = k pi / 2`` (``k`` odd) and ``a_k = 2 / (3 s_k^3)``:
    ``p = z/3 - z^2/6 - sum a_k exp(-3 s_k^2 t) sin(s_k z)`` and
    ``u = -(1/3)[1/9 - z^2/6 + z^3/18 - t (1 - z) - sum a_k exp(-3 s_k^2 t) cos(s_k z) / s_k]``.
    Both governing equations hold term by term, ``u(1,t)=p(0,t)=p_z(1,t)=0``,
    ``3 u_z - p = -t`` and ``u(z,0) = p(z,0) = 0``.
    """
    k = _odd(terms)
    z, t = np.broadcast_arrays(np.asarray(z, dtype=np.float64), np.asarray(t, dtype=np.float64))
    s = k * np.pi / 2
    a = 2.0 / (3.0 * s**3)
    decay = a * np.exp(-3.0 * s**2 * t[..., None])
    p = z / 3 - z**2 / 6 - np.sum(decay * np.sin(s * z[..., None]), axis=-1)
    u = -(1.0 / 9 - z**2 / 6 + z**3 / 18 - t * (1 - z) - np.sum(decay * np.cos(s * z[..., None]) / s, axis=-1)) / 3
    return u, p


def biot_ramp_field(terms: int = 401):
    """:func:`biot_ramp_solution` as ``fn(f_batch, [z, t]) -> [u, p]`` for closed-form evaluators."""
    k = _odd(terms)
    s = k * np.pi / 2
    a = 2.0 / (3.0 * s**3)

    def fn(_f_batch, coords):
        z, t = coords
        decay = hd.exp(_modal(t) * (-3.0 * s**2)) * a
        zs = _modal(z) * s
        p = z * (1.0 / 3) - z * z * (1.0 / 6) - (decay * hd.sin(zs)).sum(axis=-1)
        u = (1.0 / 9 - z * z * (1.0 / 6) + z * z * z * (1.0 / 18) - t * (1.0 - z)
             - (decay * hd.cos(zs) * (1.0 / s)).sum(axis=-1)) * (-1.0 / 3)
        return [u, p]

    return fn


# -- metric ------------------------------------------------------------------------


def relative_l2(pred, ref) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref.ravel())
    if denom == 0.0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm((pred - ref).ravel()) / denom)
