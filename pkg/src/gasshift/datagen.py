"""Synthetic gas datasets from the van der Waals equation of state.

State variables (T, V, N) are drawn from independent Gaussians and the
pressure is obtained by solving the van der Waals equation for P.

Random numbers come from numpy's PCG64 bit generator.  Normal deviates are
produced from pairs of uniform doubles with the Box-Muller cosine branch,
so every record consumes exactly six uniforms in the order
``T(u1, u2), V(u1, u2), N(u1, u2)`` (plus six more for each rejected draw).
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DomainError, SamplingError, UnknownGasError

R_GAS = 0.0821  # L·atm/(mol·K)
MAX_RETRIES = 1000
CSV_HEADER = ("temperature_K", "volume_L", "moles_mol", "pressure_atm")


@dataclass(frozen=True)
class GasSpec:
    name: str
    a: float  # L^2 atm / mol^2
    b: float  # L / mol

    def __post_init__(self):
        if not self.name:
            raise ValueError("gas name must be nonempty")
        if self.a < 0 or self.b < 0:
            raise ValueError(f"van der Waals constants must be >= 0, got a={self.a}, b={self.b}")


# name, formula alias, a, b
_TABLE = (
    ("Ideal Gas", "ideal", 0.0, 0.0),
    ("Hydrogen", "H2", 0.244, 0.0266),
    ("Helium", "He", 0.0346, 0.0237),
    ("Neon", "Ne", 0.211, 0.0174),
    ("Argon", "Ar", 1.355, 0.032),
    ("Xenon", "Xe", 4.00, 0.051),
    ("Nitrogen", "N2", 1.390, 0.0391),
    ("Oxygen", "O2", 1.360, 0.0318),
    ("Carbon Dioxide", "CO2", 3.610, 0.0427),
    ("Methane", "CH4", 2.250, 0.0428),
)


@dataclass(frozen=True)
class GasTable:
    entries: tuple[GasSpec, ...]
    aliases: dict = field(default_factory=dict, compare=False)

    R = R_GAS

    def __post_init__(self):
        names = [g.name for g in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("gas names must be unique")

    def __iter__(self) -> Iterator[GasSpec]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.entries]

    def lookup(self, name: str) -> GasSpec:
        """Find a gas by name or chemical formula, case-insensitively."""
        key = name.strip().lower()
        key = self.aliases.get(key, key)
        for gas in self.entries:
            if gas.name.lower() == key:
                return gas
        raise UnknownGasError(name, self.names)


def builtin_gas_table() -> GasTable:
    entries = tuple(GasSpec(name, a, b) for name, _, a, b in _TABLE)
    aliases = {alias.lower(): name.lower() for name, alias, _, _ in _TABLE}
    return GasTable(entries, aliases)


@dataclass(frozen=True)
class SamplerParams:
    mu_T: float
    sigma_T: float
    mu_V: float
    sigma_V: float
    mu_N: float
    sigma_N: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")


def exp1_params() -> SamplerParams:
    return SamplerParams(mu_T=300.0, sigma_T=25.0, mu_V=50.0, sigma_V=5.0, mu_N=15.0, sigma_N=1.0)


class Exp2Params(NamedTuple):
    first: SamplerParams
    second: SamplerParams


def exp2_params() -> Exp2Params:
    """Sampler parameters of the training-side and shifted datasets of experiment 2."""
    return Exp2Params(
        first=SamplerParams(mu_T=273.0, sigma_T=50.0, mu_V=10.0, sigma_V=1.0, mu_N=10.0, sigma_N=1.0),
        second=SamplerParams(mu_T=300.0, sigma_T=50.0, mu_V=9.0, sigma_V=1.5, mu_N=11.0, sigma_N=1.0),
    )


def vdw_pressure(T, V, N, gas: GasSpec):
    """Pressure in atm from the van der Waals equation.

    Works elementwise on arrays. Raises DomainError when any T, V, N is
    nonpositive or when the excluded volume ``N*b`` fills the container.
    """
    T = np.asarray(T, dtype=float)
    V = np.asarray(V, dtype=float)
    N = np.asarray(N, dtype=float)
    free = V - N * gas.b
    if np.any(T <= 0) or np.any(V <= 0) or np.any(N <= 0):
        raise DomainError("temperature, volume and moles must be positive")
    if np.any(free <= 0):
        raise DomainError(f"V - N*b must be positive for {gas.name}")
    P = N * R_GAS * T / free - gas.a * N**2 / V**2
    return P[()] if P.ndim == 0 else P


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(master: int, label: str) -> int:
    """Deterministic 64-bit child seed for a named pipeline stage.

    The child is ``SeedSequence([master, crc32(label)])`` collapsed to one
    uint64 word, so the same (master, label) pair always yields the same seed.
    """
    ss = np.random.SeedSequence([int(master), zlib.crc32(label.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _normal(rng: np.random.Generator, mu: float, sigma: float) -> float:
    u1 = 1.0 - rng.random()  # (0, 1]
    u2 = rng.random()
    return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def sample_state(params: SamplerParams, rng: np.random.Generator) -> tuple[float, float, float]:
    """Draw one physical (T, V, N) triple, redrawing nonpositive values."""
    for _ in range(MAX_RETRIES):
        T = _normal(rng, params.mu_T, params.sigma_T)
        V = _normal(rng, params.mu_V, params.sigma_V)
        N = _normal(rng, params.mu_N, params.sigma_N)
        if T > 0 and V > 0 and N > 0:
            return T, V, N
    raise SamplingError(f"no physical state after {MAX_RETRIES} draws from {params}")


class GasRecord(NamedTuple):
    T: float
    V: float
    N: float
    P: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Generated records stored as an (n, 4) array of T, V, N, P."""

    gas: GasSpec
    params: SamplerParams
    seed: int
    data: np.ndarray

    def __post_init__(self):
        self.data.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.data)

    def __len__(self):
        return self.size

    @property
    def temperature(self):
        return self.data[:, 0]

    @property
    def volume(self):
        return self.data[:, 1]

    @property
    def moles(self):
        return self.data[:, 2]

    @property
    def pressure(self):
        return self.data[:, 3]

    @property
    def features(self):
        """(n, 3) view of T, V, N."""
        return self.data[:, :3]

    def records(self) -> list[GasRecord]:
        return [GasRecord(*map(float, row)) for row in self.data]

    def take(self, rows) -> "Dataset":
        return Dataset(self.gas, self.params, self.seed, np.array(self.data[rows]))

    def metadata(self) -> dict:
        return {
            "gas": self.gas.name,
            "a": self.gas.a,
            "b": self.gas.b,
            "params": asdict(self.params),
            "seed": self.seed,
            "size": self.size,
        }

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.gas == other.gas
            and self.params == other.params
            and self.seed == other.seed
            and np.array_equal(self.data, other.data)
        )


def generate(gas: GasSpec, params: SamplerParams, n: int, seed: int) -> Dataset:
    """Sample ``n`` physical records for ``gas`` and compute their pressures."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    rows = np.empty((n, 4))
    for i in range(n):
        for _ in range(MAX_RETRIES):
            T, V, N = sample_state(params, rng)
            if V - N * gas.b > 0:
                break
        else:
            raise SamplingError(f"V - N*b stayed nonpositive for {gas.name} after {MAX_RETRIES} draws")
        rows[i, :3] = T, V, N
    rows[:, 3] = vdw_pressure(rows[:, 0], rows[:, 1], rows[:, 2], gas)
    return Dataset(gas, params, int(seed), rows)


def metadata_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def write_dataset(dataset: Dataset, path) -> Path:
    """Write the CSV file plus a ``<stem>.meta.json`` sidecar; returns the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in dataset.data:
            writer.writerow([f"{v:.17g}" for v in row])
    with open(metadata_path(path), "w") as fh:
        json.dump(dataset.metadata(), fh, indent=2)
        fh.write("\n")
    return path


def read_columns(path) -> dict[str, np.ndarray]:
    """Read any numeric CSV with a header row into a column dict."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    try:
        values = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: could not parse numeric rows ({exc})") from None
    return {name: values[:, j] for j, name in enumerate(header)}


def read_dataset(path) -> Dataset:
    """Load a dataset written by :func:`write_dataset`, sidecar included."""
    cols = read_columns(path)
    missing = [c for c in CSV_HEADER if c not in cols]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    data = np.column_stack([cols[c] for c in CSV_HEADER])
    meta_file = metadata_path(path)
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
        gas = GasSpec(meta["gas"], meta["a"], meta["b"])
        params = SamplerParams(**meta["params"])
        seed = int(meta["seed"])
    else:
        gas = GasSpec("unknown", 0.0, 0.0)
        params = None
        seed = 0
    return Dataset(gas, params, seed, data)
