"""Simulation designs and the size/power replication engine.

Replication ``r`` of an experiment draws from its own generator seeded by
``SeedSequence(master_seed, spawn_key=(r,))``, so results do not depend on how
replications are spread over worker processes.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .csi import CsiConfig, power_enhanced_csi
from .errors import ConfigError, PowerEnhanceError
from .panel import FactorPanel, Panel
from .quad_tests import FpConfig, power_enhanced_fp
from .screening import oracle_sets

log = logging.getLogger(__name__)

# Fama-French three-factor calibration (means/covariances of loadings and factors)
MU_B = np.array([0.9833, -0.1233, 0.0839])
SIGMA_B = np.array(
    [
        [0.0921, -0.0178, 0.0436],
        [-0.0178, 0.0862, -0.0211],
        [0.0436, -0.0211, 0.7624],
    ]
)
MU_F = np.array([0.0260, 0.0211, -0.0043])
SIGMA_F = np.array(
    [
        [3.2351, 0.1783, 0.7783],
        [0.1783, 0.5069, 0.0102],
        [0.7783, 0.0102, 0.6586],
    ]
)

FP_ALTERNATIVES = ("null", "sparse_ha1", "weak_ha2")
CSI_ALTERNATIVES = ("null", "spatial")
FP_METHODS = ("J_wald", "PE")
CSI_METHODS = ("J1", "PE")


@dataclass(frozen=True)
class FpDgpSpec:
    N: int = 500
    T: int = 300
    alternative: str = "null"
    mu_B: np.ndarray = field(default_factory=lambda: MU_B.copy())
    Sigma_B: np.ndarray = field(default_factory=lambda: SIGMA_B.copy())
    mu_f: np.ndarray = field(default_factory=lambda: MU_F.copy())
    Sigma_f: np.ndarray = field(default_factory=lambda: SIGMA_F.copy())
    block_size: int = 4
    rho_range: tuple = (0.0, 0.5)
    loading_noise_var: float = 0.01
    ha1_value: float = 0.3
    ha1_count: str = "round"  # nonzero count N/T rounded half-up, or "floor"

    def validate(self):
        if self.alternative not in FP_ALTERNATIVES:
            raise ConfigError(f"alternative must be one of {FP_ALTERNATIVES}, got {self.alternative!r}")
        if self.ha1_count not in ("round", "floor"):
            raise ConfigError(f"ha1_count must be 'round' or 'floor', got {self.ha1_count!r}")
        if self.N < 2 or self.T < 5:
            raise ConfigError(f"need N >= 2 and T >= 5, got N={self.N}, T={self.T}")
        for name in ("Sigma_B", "Sigma_f"):
            m = _sym(getattr(self, name))
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ConfigError(f"{name} is not positive definite")
        if self.block_size < 1:
            raise ConfigError("block_size must be positive")

    @property
    def application(self):
        return "fp"


@dataclass(frozen=True)
class CsiDgpSpec:
    n: int = 200
    T: int = 100
    alternative: str = "null"
    alpha: float = -1.0
    beta: float = 2.0
    xi: float = 0.7
    mu_sd: float = 0.5
    x_init: float = 0.5
    kappa: float = 0.5
    spatial_rho: float = 0.2
    block_size: int = 4

    def validate(self):
        if self.alternative not in CSI_ALTERNATIVES:
            raise ConfigError(f"alternative must be one of {CSI_ALTERNATIVES}, got {self.alternative!r}")
        if self.n < 3 or self.T < 3:
            raise ConfigError(f"need n >= 3 and T >= 3, got n={self.n}, T={self.T}")
        if self.n % self.block_size:
            raise ConfigError(f"n={self.n} must be divisible by the block size {self.block_size}")

    @property
    def n_active_blocks(self):
        return int(math.floor(self.n**0.3))

    @property
    def application(self):
        return "csi"


def _sym(a):
    a = np.asarray(a, dtype=np.float64)
    return (a + a.T) / 2.0


def ha1_nonzeros(n, t, rule="round"):
    if rule == "floor":
        return n // t
    return (2 * n + t) // (2 * t)  # floor(n/t + 1/2) in exact integer arithmetic


def fp_alpha_vector(spec):
    n, t = spec.N, spec.T
    theta = np.zeros(n)
    if spec.alternative == "sparse_ha1":
        theta[: ha1_nonzeros(n, t, spec.ha1_count)] = spec.ha1_value
    elif spec.alternative == "weak_ha2":
        k = int(math.floor(n**0.4))
        theta[:k] = math.sqrt(math.log(n) / t)
    return theta


def population_a_f(mu_f, sigma_f):
    """1 - E f' (E f f')^{-1} E f from the factor mean and covariance."""
    mu_f = np.asarray(mu_f, dtype=np.float64)
    second = _sym(sigma_f) + np.outer(mu_f, mu_f)
    return 1.0 - float(mu_f @ np.linalg.solve(second, mu_f))


def _block_slices(n, size):
    return [slice(s, min(s + size, n)) for s in range(0, n, size)]


def _sample_block_gaussian(rng, blocks, t):
    """Draw T columns from N(0, blockdiag(blocks)); returns (n, T)."""
    n = sum(b.shape[0] for b in blocks)
    z = rng.standard_normal((n, t))
    out = np.empty_like(z)
    start = 0
    for b in blocks:
        k = b.shape[0]
        out[start : start + k] = np.linalg.cholesky(b) @ z[start : start + k]
        start += k
    return out


def _blocks_to_dense(blocks):
    n = sum(b.shape[0] for b in blocks)
    m = np.zeros((n, n))
    start = 0
    for b in blocks:
        k = b.shape[0]
        m[start : start + k, start : start + k] = b
        start += k
    return m


def _labels(prefix, count):
    width = len(str(count))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(count)]


@dataclass
class FpDataset:
    returns: Panel
    factors: FactorPanel
    theta: np.ndarray
    loadings: np.ndarray  # (N, 3)
    sigma_u_blocks: list

    @property
    def sigma_u(self):
        return _blocks_to_dense(self.sigma_u_blocks)


@dataclass
class CsiDataset:
    y: Panel
    x: Panel
    sigma_u_blocks: list

    @property
    def sigma_u(self):
        return _blocks_to_dense(self.sigma_u_blocks)


def gen_fp_dataset(spec, seed):
    """y_it = theta_i + b_i' f_t + u_it with block-diagonal Sigma_u."""
    spec.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, t = spec.N, spec.T
    b = rng.multivariate_normal(spec.mu_B, _sym(spec.Sigma_B), size=n, method="cholesky")
    f = rng.multivariate_normal(spec.mu_f, _sym(spec.Sigma_f), size=t, method="cholesky")
    blocks = []
    for sl in _block_slices(n, spec.block_size):
        k = sl.stop - sl.start
        rho = rng.uniform(*spec.rho_range)
        corr = np.full((k, k), rho)
        np.fill_diagonal(corr, 1.0)
        v = rng.normal(0.0, math.sqrt(spec.loading_noise_var), size=(k, 3))
        sd = np.sqrt(1.0 + np.sum(v**2, axis=1))
        blocks.append(corr * np.outer(sd, sd))
    u = _sample_block_gaussian(rng, blocks, t)
    theta = fp_alpha_vector(spec)
    y = theta[:, None] + b @ f.T + u
    times = _labels("t", t)
    returns = Panel(y, _labels("a", n), times)
    factors = FactorPanel(f.T, ["F1", "F2", "F3"], times)
    return FpDataset(returns, factors, theta, b, blocks)


def gen_csi_dataset(spec, seed):
    """Mixed-effect panel y = alpha + beta x + mu_i + u with AR(1) regressors."""
    spec.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, t = spec.n, spec.T
    mu = rng.normal(0.0, spec.mu_sd, size=n)
    eps = rng.standard_normal((n, t))
    x = np.empty((n, t))
    x[:, 0] = spec.x_init
    for s in range(1, t):
        x[:, s] = spec.xi * x[:, s - 1] + mu + eps[:, s]
    raw = (1.0 + spec.kappa * x.mean(axis=1)) ** 2
    sig2 = raw / raw.mean()
    sd = np.sqrt(sig2)

    nblocks = n // spec.block_size
    active = set()
    if spec.alternative == "spatial":
        active = set(rng.choice(nblocks, size=min(spec.n_active_blocks, nblocks), replace=False).tolist())
    idx = np.arange(spec.block_size)
    toeplitz = spec.spatial_rho ** np.abs(idx[:, None] - idx[None, :])
    blocks = []
    for k in range(nblocks):
        base = toeplitz if k in active else np.eye(spec.block_size)
        s = sd[k * spec.block_size : (k + 1) * spec.block_size]
        blocks.append(base * np.outer(s, s))
    u = _sample_block_gaussian(rng, blocks, t)
    y = spec.alpha + spec.beta * x + mu[:, None] + u
    units, times = _labels("i", n), _labels("t", t)
    return CsiDataset(Panel(y, units, times), Panel(x, units, times), blocks)


# --------------------------------------------------------------------------
# replication engine
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    spec: object
    fp_config: FpConfig = FpConfig()
    name: str = ""

    @property
    def label(self):
        return self.name or self.spec.alternative


@dataclass
class Replication:
    index: int
    j0: float = float("nan")
    pivotal: float = float("nan")
    combined: float = float("nan")
    p_pivotal: float = float("nan")
    p_combined: float = float("nan")
    selected: tuple = ()
    flags: tuple = ()
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)

    @property
    def empty(self):
        return len(self.selected) == 0


@dataclass(frozen=True)
class SizePowerRow:
    method: str
    scenario: str
    T: int
    N: int
    reject_freq: float
    empty_s_freq: float
    reps: int
    seed: int
    n_failed: int = 0
    n_flagged: int = 0

    CSV_COLUMNS = ("method", "scenario", "T", "N", "reject_freq", "empty_s_freq", "reps", "seed")

    def csv_row(self):
        return [
            self.method,
            self.scenario,
            str(self.T),
            str(self.N),
            f"{self.reject_freq:.6f}",
            f"{self.empty_s_freq:.6f}",
            str(self.reps),
            str(self.seed),
        ]


def replication_rng(master_seed, r):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r,)))


def run_one(scenario, master_seed, r):
    rng = replication_rng(master_seed, r)
    spec = scenario.spec
    try:
        if spec.application == "fp":
            data = gen_fp_dataset(spec, rng)
            rep = power_enhanced_fp(data.returns, data.factors, scenario.fp_config)
        else:
            data = gen_csi_dataset(spec, rng)
            rep = power_enhanced_csi(data.y, [data.x], CsiConfig())
    except (PowerEnhanceError, np.linalg.LinAlgError) as exc:
        return Replication(r, error=f"{type(exc).__name__}: {exc}")
    return Replication(
        r,
        rep.j0,
        rep.pivotal,
        rep.combined,
        rep.p_value_pivotal,
        rep.p_value,
        tuple(rep.selected),
        tuple(rep.flags),
    )


def _run_chunk(args):
    scenario, master_seed, indices = args
    return [run_one(scenario, master_seed, r) for r in indices]


def simulate(scenario, reps, master_seed, n_jobs=1):
    """Run ``reps`` replications; returns them ordered by replication index."""
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    scenario.spec.validate()
    n_jobs = max(1, int(n_jobs or 1))
    if n_jobs == 1:
        return _run_chunk((scenario, master_seed, range(reps)))
    chunks = [list(range(k, reps, n_jobs)) for k in range(n_jobs)]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        parts = pool.map(_run_chunk, [(scenario, master_seed, c) for c in chunks])
        out = [rec for part in parts for rec in part]
    out.sort(key=lambda rec: rec.index)
    return out


def aggregate(scenario, records, methods, level, master_seed, exclude_flagged=False):
    spec = scenario.spec
    ok = [r for r in records if not r.failed]
    flagged = [r for r in ok if r.flags]
    if exclude_flagged:
        ok = [r for r in ok if not r.flags]
    n_failed = len(records) - len([r for r in records if not r.failed])
    if n_failed:
        log.warning("%d of %d replications failed and were excluded", n_failed, len(records))
    count = len(ok)
    empty = sum(r.empty for r in ok) / count if count else float("nan")
    dim_n = spec.N if spec.application == "fp" else spec.n
    rows = []
    for m in methods:
        if m == "PE":
            rej = sum(r.p_combined < level for r in ok)
        elif m in ("J_wald", "J1"):
            rej = sum(r.p_pivotal < level for r in ok)
        else:
            raise ConfigError(f"unknown method {m!r}")
        freq = rej / count if count else float("nan")
        rows.append(
            SizePowerRow(m, scenario.label, spec.T, dim_n, freq, empty, count, master_seed, n_failed, len(flagged))
        )
        if spec.alternative == "null" and count:
            band = math.sqrt(level * (1 - level) / count)
            if abs(freq - level) > 3 * band:
                log.warning("%s size %.4f is more than 3 SE from level %.3f", m, freq, level)
    return rows


def run_experiment(scenario, methods=None, reps=500, level=0.05, master_seed=0, n_jobs=1):
    """Size/power table rows for one scenario."""
    if methods is None:
        methods = FP_METHODS if scenario.spec.application == "fp" else CSI_METHODS
    records = simulate(scenario, reps, master_seed, n_jobs)
    return aggregate(scenario, records, methods, level, master_seed)


def screening_diagnostics(theta, v_true, selected_sets, delta, grey_band=None):
    """Rates of sure screening, exact recovery, and false selections confined to the grey area."""
    kwargs = {} if grey_band is None else {"grey_band": grey_band}
    oracle = oracle_sets(theta, v_true, delta, **kwargs)
    s_true = set(oracle.s_theta.tolist())
    grey = set(oracle.grey.tolist())
    sets = [set(int(i) for i in s) for s in selected_sets]
    if not sets:
        raise ValueError("need at least one replication")
    r = len(sets)
    return {
        "sure_screening": sum(s_true <= s for s in sets) / r,
        "exact": sum(s_true == s for s in sets) / r,
        "extras_in_grey": sum((s - s_true) <= grey for s in sets) / r,
        "empty": sum(not s for s in sets) / r,
        "S_theta": sorted(s_true),
        "grey": sorted(grey),
    }


def fp_oracle_v(spec, sigma_u):
    """v_j = (Sigma_u)_jj / (T a_f) with population a_f."""
    return np.diag(sigma_u) / (spec.T * population_a_f(spec.mu_f, spec.Sigma_f))


def default_jobs():
    return os.cpu_count() or 1


__all__ = [
    "FpDgpSpec",
    "CsiDgpSpec",
    "Scenario",
    "SizePowerRow",
    "gen_fp_dataset",
    "gen_csi_dataset",
    "run_experiment",
    "simulate",
    "aggregate",
    "screening_diagnostics",
    "fp_oracle_v",
]
