"""Input-function samplers, coordinate axes and the on-disk dataset format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import oracles
from .errors import CorruptionError, FormatError, NumericError
from .physics import ProblemSpec
from .rng import rng_stream

DATASET_VERSION = 1
KERNELS = ("periodic_spectral", "rbf")


@dataclass(frozen=True)
class GPKernelSpec:
    kind: str = "periodic_spectral"
    sigma: float = 25.0
    tau: float = 5.0
    gamma: float = 4.0
    modes: int = 2048
    amplitude: float = 0.2
    lengthscale_sq: float = 0.1
    jitter: float = 1e-10

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise ValueError(f"kernel kind must be one of {KERNELS}, got {self.kind!r}")
        positive = (self.sigma, self.tau, self.modes, self.amplitude, self.lengthscale_sq)
        if min(positive) <= 0 or self.jitter < 0:
            raise ValueError("kernel parameters must be positive")

    def spectral_density(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        return self.sigma**2 * (self.tau**2 + (2 * np.pi * k) ** 2) ** (-self.gamma)

    def point_variance(self) -> float:
        """Pointwise variance of the process (sum of the retained mode densities)."""
        if self.kind == "rbf":
            return self.amplitude
        return float(np.sum(self.spectral_density(np.arange(1, self.modes + 1))))


def sample_gp_periodic_spectral(spec: GPKernelSpec, n_points: int = 101, count: int = 1, seed: int = 0) -> np.ndarray:
    """Random Fourier series ``sum_k sqrt(S(k)) (a_k cos 2 pi k x + b_k sin 2 pi k x)``.

    Uses ``k = 1..modes`` on ``linspace(0, 1, n_points)``. Phases are reduced
    mod 1 before the trig calls so the endpoints agree to the last bit.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    rng = rng_stream(seed, "gp_periodic_spectral")
    k = np.arange(1, spec.modes + 1, dtype=np.float64)
    x = np.linspace(0.0, 1.0, n_points)
    phase = 2 * np.pi * np.mod(np.outer(k, x), 1.0)
    scale = np.sqrt(spec.spectral_density(k))[:, None]
    a = rng.standard_normal((count, spec.modes))
    b = rng.standard_normal((count, spec.modes))
    return a @ (scale * np.cos(phase)) + b @ (scale * np.sin(phase))


def rbf_cholesky(spec: GPKernelSpec, x: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``K + jitter I``, escalating jitter up to 1e-6."""
    diff = x[:, None] - x[None, :]
    K = spec.amplitude * np.exp(-(diff**2) / spec.lengthscale_sq)
    jitter = spec.jitter
    while True:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(len(x)))
        except np.linalg.LinAlgError:
            if jitter >= 1e-6:
                raise NumericError(f"RBF kernel not positive definite with jitter {jitter:g}") from None
            jitter = max(jitter * 10, 1e-12)


def sample_gp_rbf(spec: GPKernelSpec, n_points: int = 101, count: int = 1, seed: int = 0) -> np.ndarray:
    if not 2 <= n_points <= 512:
        raise ValueError("n_points must be in [2, 512] for the dense factorisation")
    rng = rng_stream(seed, "gp_rbf")
    L = rbf_cholesky(spec, np.linspace(0.0, 1.0, n_points))
    return rng.standard_normal((count, n_points)) @ L.T


# -- coordinate axes ---------------------------------------------------------------


def build_axes(problem: ProblemSpec, role: str, seed: int = 0) -> list[np.ndarray]:
    """Coordinate vectors of one sampling lattice, in the problem's axis order.

    Roles: ``residual``, ``ic``, ``bc``, ``test``; heat adds ``bc_y`` for the
    two edges normal to y (``bc`` holds the edges normal to x).
    """
    P = problem
    lin = np.linspace
    if role == "residual":
        if P.residual_sampling == "random":
            rng = rng_stream(seed, "residual_axes")
            return [np.sort(rng.uniform(lo, hi, n)) for (lo, hi), n in zip(P.domain, P.residual_points)]
        axes = [lin(lo, hi, n) for (lo, hi), n in zip(P.domain, P.residual_points)]
        if P.kind == "heat":
            axes[3] = P.c_grid(P.residual_points[3])
        return axes
    if P.kind == "burgers":
        if role == "ic":
            return [lin(0, 1, P.ic_points), np.array([0.0])]
        if role == "bc":
            return [np.array([0.0, 1.0]), lin(0, 1, P.bc_points)]
        if role == "test":
            return [lin(0, 1, P.test_points[0]), lin(0, 1, P.test_points[1])]
    elif P.kind == "biot":
        if role == "ic":
            # z = 0 is left out: the drained surface (p = 0) and p = f(0) disagree there
            return [np.arange(1, P.ic_points + 1) * (P.length / P.ic_points), np.array([0.0])]
        if role == "bc":
            return [np.array([0.0, P.length]), lin(0, 1, P.bc_points)]
        if role == "test":
            return [lin(0, P.length, P.test_points[0]), lin(0, 1, P.test_points[1])]
    else:
        c = P.c_grid(P.alpha_points)
        n = P.ic_points
        interior = np.arange(1, n + 1) / (n + 1)
        edge = lin(0, 1, P.bc_points)
        if role == "ic":
            return [interior, interior.copy(), np.array([0.0]), c]
        if role == "bc":
            return [np.array([0.0, 1.0]), edge, edge.copy(), c]
        if role == "bc_y":
            return [edge, np.array([0.0, 1.0]), edge.copy(), c]
        if role == "test":
            return [lin(0, 1, n) for n in P.test_points]
    raise ValueError(f"unknown role {role!r} for {P.kind}")


def sampling_plan(problem: ProblemSpec, seed: int = 0) -> dict[str, list[np.ndarray]]:
    roles = ["residual", "ic", "bc"] + (["bc_y"] if problem.kind == "heat" else [])
    return {r: build_axes(problem, r, seed) for r in roles}


# -- datasets --------------------------------------------------------------------


@dataclass
class Dataset:
    """Named float64 arrays plus provenance.

    Burgers: ``u_train``, ``u_test``, ``s_test`` ``[N, n_x, n_t]``.
    Biot: ``f_train``, ``g_train`` (surface displacement at the BC times),
    ``f_test``, ``u_test``, ``p_test``.
    Heat: ``T0_train`` ``[N, 1]``, ``T0_test``, ``alpha_test``, ``T_test``
    ``[N, n_x, n_y, n_t]``.
    """

    kind: str
    arrays: dict = field(default_factory=dict)
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @property
    def branch_train(self) -> np.ndarray:
        return self.arrays[{"burgers": "u_train", "biot": "f_train", "heat": "T0_train"}[self.kind]]

    @property
    def branch_test(self) -> np.ndarray:
        return self.arrays[{"burgers": "u_test", "biot": "f_test", "heat": "T0_test"}[self.kind]]

    @property
    def n_train(self) -> int:
        return int(self.branch_train.shape[0])

    @property
    def n_test(self) -> int:
        return int(self.branch_test.shape[0])

    def extras(self) -> dict:
        return {"g": self.arrays["g_train"]} if self.kind == "biot" else {}


def default_kernel(kind: str) -> GPKernelSpec:
    return GPKernelSpec(kind="rbf") if kind == "biot" else GPKernelSpec()


def generate_dataset(
    problem: ProblemSpec,
    n_train: int,
    n_test: int,
    seed: int,
    kernel: GPKernelSpec | None = None,
    T0_range: tuple[float, float] = (0.0, 1.0),
) -> Dataset:
    """Sample input functions and compute references on the test lattice.

    Train and test draws come from one sampler call and are split, so the two
    sets never share a function.
    """
    kind = problem.kind
    total = n_train + n_test
    test_axes = build_axes(problem, "test")
    arrays: dict[str, np.ndarray] = {}
    meta: dict = {"problem": _problem_meta(problem)}
    if kind in ("burgers", "biot"):
        kernel = kernel or default_kernel(kind)
        meta["kernel"] = asdict(kernel)
        sampler = sample_gp_rbf if kernel.kind == "rbf" else sample_gp_periodic_spectral
        funcs = sampler(kernel, problem.n_sensors, total, seed)
        train, test = funcs[:n_train], funcs[n_train:]
        if kind == "burgers":
            arrays["u_train"] = train
            arrays["u_test"] = test
            arrays["s_test"] = oracles.burgers_solve(test, nu=problem.nu, x_eval=test_axes[0], t_eval=test_axes[1])
        else:
            t_bc = build_axes(problem, "bc")[1]
            u_tr, _ = oracles.biot_solve(
                train, z_eval=np.array([0.0]), t_eval=t_bc, length=problem.length,
                modulus=problem.modulus, conductivity=problem.conductivity,
            )
            arrays["f_train"] = train
            arrays["g_train"] = u_tr[:, 0, :]
            u_te, p_te = oracles.biot_solve(
                test, z_eval=test_axes[0], t_eval=test_axes[1], length=problem.length,
                modulus=problem.modulus, conductivity=problem.conductivity,
            )
            arrays["f_test"] = test
            arrays["u_test"] = u_te
            arrays["p_test"] = p_te
    else:
        rng = rng_stream(seed, "heat_inputs")
        lo, hi = T0_range
        T0 = rng.uniform(lo, hi, (total, 1))
        a_lo, a_hi = problem.alpha_range
        alpha = rng.uniform(a_lo, a_hi, n_test)
        meta["T0_range"] = [lo, hi]
        arrays["T0_train"] = T0[:n_train]
        arrays["T0_test"] = T0[n_train:]
        arrays["alpha_test"] = alpha
        x, y, t = test_axes
        arrays["T_test"] = np.stack([
            oracles.heat_analytic(
                T0[n_train + i, 0], alpha[i], x[:, None, None], y[None, :, None], t[None, None, :]
            )
            for i in range(n_test)
        ]) if n_test else np.zeros((0, len(x), len(y), len(t)))
    for i, a in enumerate(test_axes):
        arrays[f"test_axis{i}"] = np.asarray(a, dtype=np.float64)
    return Dataset(kind, arrays, seed, meta)


def _problem_meta(problem: ProblemSpec) -> dict:
    out = asdict(problem)
    for k, v in out.items():
        if isinstance(v, tuple):
            out[k] = list(v)
    return out


def save_dataset(ds: Dataset, path) -> Path:
    """Directory with ``manifest.json`` and one little-endian f64 blob per array."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in ds.arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        fname = f"{name}.f64"
        (path / fname).write_bytes(blob)
        entries[name] = {"file": fname, "shape": list(np.shape(arr)), "sha256": hashlib.sha256(blob).hexdigest()}
    manifest = {"version": DATASET_VERSION, "kind": ds.kind, "seed": ds.seed, "arrays": entries, "meta": ds.meta}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"unreadable manifest in {path}: {exc}") from exc
    if manifest.get("version") != DATASET_VERSION:
        raise FormatError(f"dataset version {manifest.get('version')} is not {DATASET_VERSION}")
    arrays = {}
    for name, e in manifest["arrays"].items():
        blob = (path / e["file"]).read_bytes()
        n = int(np.prod(e["shape"], dtype=np.int64))
        if hashlib.sha256(blob).hexdigest() != e["sha256"]:
            if len(blob) == 8 * n:
                raise CorruptionError(f"checksum mismatch for {name}")
            raise CorruptionError(f"{name}: blob has {len(blob)} bytes, checksum mismatch")
        if len(blob) != 8 * n:
            raise FormatError(f"{name}: manifest shape {e['shape']} disagrees with blob length {len(blob)}")
        arrays[name] = np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(e["shape"])
    return Dataset(manifest["kind"], arrays, manifest["seed"], manifest.get("meta", {}))


def dataset_checksums(path) -> dict[str, str]:
    manifest = json.loads((Path(path) / "manifest.json").read_text())
    return {k: v["sha256"] for k, v in manifest["arrays"].items()}
