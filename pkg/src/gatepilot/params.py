"""Identified quadrotor model parameters and per-episode randomization.

``ModelParams`` holds every coefficient of the force, moment and motor
models.  The shipped nominal set (``data/params_nominal.cfg``) is the
identified A2RL-class race quad.  ``RandomizationSpec`` gives each
parameter a +/- percentage range for episode-level resampling; entries
can be tied to a group leader so that a whole coefficient group (the yaw
moment terms) shares one sample.

Both types round-trip through a plain ``key = value`` text format so the
files stay hand-editable.  The propeller radius ``r_prop`` is a measured
constant and is never randomized.
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

# Order of the flattened parameter vector used by the step kernels.
PARAM_ORDER = (
    "k_omega", "k_x", "k_y", "k_x2", "k_y2", "k_alpha", "k_hor",
    "k_p1", "k_p2", "k_p3", "k_p4",
    "k_q1", "k_q2", "k_q3", "k_q4",
    "k_r1", "k_r2", "k_r3", "k_r4", "k_r5", "k_r6", "k_r7", "k_r8",
    "J_x", "J_y", "J_z",
    "omega_min", "omega_max", "k", "tau", "r_prop",
)

# Parameters whose randomization entry may be tied ("-") to a group leader.
TIE_GROUPS = {
    "k_r2": "k_r1", "k_r3": "k_r1", "k_r4": "k_r1",
    "k_r6": "k_r5", "k_r7": "k_r5", "k_r8": "k_r5",
}


@dataclass(frozen=True)
class ModelParams:
    """Identified dynamics coefficients (SI units, motor speeds in rad/s)."""

    k_omega: float = 1.55e-6
    k_x: float = 5.37e-5
    k_y: float = 5.37e-5
    k_x2: float = 4.10e-3
    k_y2: float = 1.51e-2
    k_alpha: float = 3.145
    k_hor: float = 7.245
    k_p1: float = 4.99e-5
    k_p2: float = 3.78e-5
    k_p3: float = 4.82e-5
    k_p4: float = 3.83e-5
    k_q1: float = 2.05e-5
    k_q2: float = 2.46e-5
    k_q3: float = 2.02e-5
    k_q4: float = 2.57e-5
    k_r1: float = 3.38e-3
    k_r2: float = 3.38e-3
    k_r3: float = 3.38e-3
    k_r4: float = 3.38e-3
    k_r5: float = 3.24e-4
    k_r6: float = 3.24e-4
    k_r7: float = 3.24e-4
    k_r8: float = 3.24e-4
    J_x: float = -0.89
    J_y: float = 0.96
    J_z: float = -0.34
    omega_min: float = 341.75
    omega_max: float = 3100.00
    k: float = 0.50
    tau: float = 0.025
    r_prop: float = 0.0485775  # measured propeller radius, fixed

    def __post_init__(self):
        if not (self.omega_max > self.omega_min > 0.0):
            raise ValueError("require omega_max > omega_min > 0")
        if self.tau <= 0.0:
            raise ValueError("require tau > 0")

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_ORDER])

    @classmethod
    def from_vector(cls, vec) -> "ModelParams":
        return cls(**{n: float(v) for n, v in zip(PARAM_ORDER, vec)})

    def save(self, path):
        _write_kv(path, {n: getattr(self, n) for n in PARAM_ORDER})

    @classmethod
    def load(cls, path) -> "ModelParams":
        kv = _read_kv(path)
        unknown = set(kv) - set(PARAM_ORDER)
        if unknown:
            raise ValueError(f"unknown parameters in {path}: {sorted(unknown)}")
        return cls(**{n: float(v) for n, v in kv.items()})


@dataclass(frozen=True)
class RandomizationSpec:
    """Per-parameter +/- percentage ranges around nominal.

    ``percent[name]`` is the half-width in percent of nominal.  Names in
    ``tied`` reuse the sample drawn for their group leader instead of
    drawing independently (their percent entry is ignored).
    """

    percent: dict = field(default_factory=dict)
    tied: frozenset = frozenset()

    def __post_init__(self):
        for name, pct in self.percent.items():
            if name not in PARAM_ORDER:
                raise ValueError(f"unknown parameter {name!r}")
            if pct < 0.0:
                raise ValueError(f"negative range for {name!r}")
        for name in self.tied:
            if name not in TIE_GROUPS:
                raise ValueError(f"{name!r} has no tie group leader")

    @classmethod
    def flat(cls, pct: float) -> "RandomizationSpec":
        """Same percentage for every randomizable parameter."""
        names = [n for n in PARAM_ORDER if n != "r_prop"]
        return cls(percent={n: float(pct) for n in names})

    def save(self, path):
        kv = {}
        for n in PARAM_ORDER:
            if n == "r_prop":
                continue
            if n in self.tied:
                kv[n] = "-"
            elif n in self.percent:
                kv[n] = self.percent[n]
        _write_kv(path, kv)

    @classmethod
    def load(cls, path) -> "RandomizationSpec":
        kv = _read_kv(path)
        percent, tied = {}, set()
        for name, raw in kv.items():
            if raw.strip() == "-":
                tied.add(name)
            else:
                percent[name] = float(raw)
        return cls(percent=percent, tied=frozenset(tied))


def randomize(params: ModelParams, spec: RandomizationSpec, rng) -> ModelParams:
    """Sample a perturbed parameter set, each p ~ U(p(1-c), p(1+c)).

    ``rng`` is a ``numpy.random.Generator`` (or an int seed).  Tied
    parameters copy their group leader's sampled value scale.  Draw order
    follows ``PARAM_ORDER`` so results are reproducible.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    factors = {}
    for name in PARAM_ORDER:
        if name in spec.tied:
            factors[name] = factors[TIE_GROUPS[name]]
        elif name in spec.percent:
            c = spec.percent[name] / 100.0
            factors[name] = rng.uniform(1.0 - c, 1.0 + c)
        else:
            factors[name] = 1.0
    return replace(
        params, **{n: getattr(params, n) * factors[n] for n in PARAM_ORDER if n != "r_prop"}
    )


def randomize_batch(params: ModelParams, spec: RandomizationSpec, rng, n: int) -> np.ndarray:
    """Vectorized version of :func:`randomize` returning an (n, 31) array."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    base = params.as_vector()
    out = np.tile(base, (n, 1))
    cols = {}
    for j, name in enumerate(PARAM_ORDER):
        if name in spec.tied:
            out[:, j] = base[j] * cols[TIE_GROUPS[name]]
        elif name in spec.percent:
            c = spec.percent[name] / 100.0
            f = rng.uniform(1.0 - c, 1.0 + c, size=n)
            cols[name] = f
            out[:, j] = base[j] * f
        else:
            cols[name] = np.ones(n)
    return out


def _write_kv(path, kv):
    lines = [f"{name} = {value}" for name, value in kv.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_kv(path):
    kv = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        name, _, raw = line.partition("=")
        kv[name.strip()] = raw.strip()
    return kv


def nominal_params_path() -> Path:
    return Path(__file__).parent / "data" / "params_nominal.cfg"
