"""Two-port ABCD algebra at a single frequency.

Every network here is a 2x2 complex chain matrix tagged with the frequency it
was evaluated at. Broadband responses are built by evaluating on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_GRID_START_HZ = 550e6
DEFAULT_GRID_STOP_HZ = 950e6
DEFAULT_GRID_POINTS = 401


class NetworkError(ValueError):
    """Invalid network parameters or a singular network."""


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w / 1e-3)


def mag_db(x: complex, floor: float = 1e-15) -> float:
    """20*log10|x| with a floor so exact zeros stay finite."""
    return 20.0 * math.log10(max(abs(x), floor))


def frequency_grid(
    start: float = DEFAULT_GRID_START_HZ,
    stop: float = DEFAULT_GRID_STOP_HZ,
    points: int = DEFAULT_GRID_POINTS,
) -> np.ndarray:
    return np.linspace(start, stop, points)


@dataclass(frozen=True)
class TwoPortAbcd:
    a: complex
    b: complex
    c: complex
    d: complex
    freq: float

    def __post_init__(self) -> None:
        if not self.freq > 0:
            raise NetworkError(f"frequency must be positive, got {self.freq}")
        for name in "abcd":
            if not np.isfinite(getattr(self, name)):
                raise NetworkError(f"non-finite ABCD entry {name}")

    @classmethod
    def from_matrix(cls, m: np.ndarray, freq: float) -> "TwoPortAbcd":
        m = np.asarray(m, dtype=complex)
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]), freq)

    @classmethod
    def identity(cls, freq: float) -> "TwoPortAbcd":
        return cls(1 + 0j, 0j, 0j, 1 + 0j, freq)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "TwoPortAbcd") -> "TwoPortAbcd":
        return cascade([self, other])


@dataclass(frozen=True)
class ScatteringMatrix:
    entries: np.ndarray
    z_ref: float
    freq: float

    def __getitem__(self, idx: tuple[int, int]) -> complex:
        """1-based indexing, so ``s[2, 1]`` is S21."""
        i, j = idx
        return complex(self.entries[i - 1, j - 1])

    def db(self, i: int, j: int) -> float:
        return mag_db(self[i, j])


def _check_freqs(stages: Sequence[TwoPortAbcd]) -> float:
    f0 = stages[0].freq
    for s in stages[1:]:
        if not math.isclose(s.freq, f0, rel_tol=1e-12):
            raise NetworkError(f"frequency mismatch in cascade: {s.freq} vs {f0}")
    return f0


def tline_abcd(z0: float, theta: float, freq: float) -> TwoPortAbcd:
    """Lossless uniform line of impedance ``z0`` and electrical length ``theta`` (rad)."""
    if not z0 > 0:
        raise NetworkError(f"characteristic impedance must be positive, got {z0}")
    c, s = math.cos(theta), math.sin(theta)
    return TwoPortAbcd(complex(c), 1j * z0 * s, 1j * s / z0, complex(c), freq)


def series_abcd(z: complex, freq: float) -> TwoPortAbcd:
    return TwoPortAbcd(1 + 0j, complex(z), 0j, 1 + 0j, freq)


def shunt_abcd(y: complex, freq: float) -> TwoPortAbcd:
    return TwoPortAbcd(1 + 0j, 0j, complex(y), 1 + 0j, freq)


def cascade(stages: Iterable[TwoPortAbcd], freq: float | None = None) -> TwoPortAbcd:
    """Chain-multiply ``stages`` in order. An empty list gives the identity at ``freq``."""
    stages = list(stages)
    if not stages:
        if freq is None:
            raise NetworkError("empty cascade needs an explicit frequency")
        return TwoPortAbcd.identity(freq)
    f0 = _check_freqs(stages)
    m = np.eye(2, dtype=complex)
    for s in stages:
        m = m @ s.matrix
    return TwoPortAbcd.from_matrix(m, f0)


def input_impedance(net: TwoPortAbcd, z_load: complex) -> complex:
    den = net.c * z_load + net.d
    if den == 0:
        raise NetworkError("singular network: C*Zl + D = 0")
    return (net.a * z_load + net.b) / den


def abcd_to_s(net: TwoPortAbcd, z_ref: float = 50.0) -> ScatteringMatrix:
    if not z_ref > 0:
        raise NetworkError(f"reference impedance must be positive, got {z_ref}")
    a, b, c, d = net.a, net.b / z_ref, net.c * z_ref, net.d
    den = a + b + c + d
    if abs(den) < 1e-300:
        raise NetworkError("singular ABCD-to-S conversion")
    s = np.array(
        [
            [(a + b - c - d) / den, 2 * (a * d - b * c) / den],
            [2 / den, (-a + b - c + d) / den],
        ],
        dtype=complex,
    )
    return ScatteringMatrix(s, z_ref, net.freq)


def s_to_abcd(s: ScatteringMatrix) -> TwoPortAbcd:
    s11, s12, s21, s22 = s[1, 1], s[1, 2], s[2, 1], s[2, 2]
    if s21 == 0:
        raise NetworkError("S21 = 0 has no ABCD representation")
    z = s.z_ref
    den = 2 * s21
    return TwoPortAbcd(
        ((1 + s11) * (1 - s22) + s12 * s21) / den,
        z * ((1 + s11) * (1 + s22) - s12 * s21) / den,
        ((1 - s11) * (1 - s22) - s12 * s21) / (z * den),
        ((1 - s11) * (1 + s22) + s12 * s21) / den,
        s.freq,
    )


def reflection(z: complex, z_ref: complex = 50.0) -> complex:
    return (z - z_ref) / (z + z_ref)


# Touchstone v1, real/imaginary, single reference impedance.

def write_s2p(path: str | Path, sweep: Sequence[ScatteringMatrix], comment: str = "") -> Path:
    if not sweep:
        raise NetworkError("nothing to write")
    z_ref = sweep[0].z_ref
    path = Path(path)
    lines = []
    if comment:
        lines.extend(f"! {c}" for c in comment.splitlines())
    lines.append(f"# Hz S RI R {z_ref:g}")
    for s in sweep:
        e = s.entries
        # column order is S11 S21 S12 S22
        vals = [e[0, 0], e[1, 0], e[0, 1], e[1, 1]]
        fields = [f"{s.freq:.9e}"] + [f"{v.real:.12e} {v.imag:.12e}" for v in vals]
        lines.append(" ".join(fields))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_s2p(path: str | Path) -> list[ScatteringMatrix]:
    scale = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
    unit, fmt, z_ref = 1.0, "MA", 50.0
    values: list[float] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            tok = line[1:].upper().split()
            for i, t in enumerate(tok):
                if t in scale:
                    unit = scale[t]
                elif t in ("RI", "MA", "DB"):
                    fmt = t
                elif t == "R":
                    z_ref = float(tok[i + 1])
            continue
        values.extend(float(v) for v in line.split())
    if len(values) % 9:
        raise NetworkError("malformed two-port Touchstone data")
    out = []
    for row in np.asarray(values).reshape(-1, 9):
        pairs = row[1:].reshape(4, 2)
        if fmt == "RI":
            v = pairs[:, 0] + 1j * pairs[:, 1]
        elif fmt == "MA":
            v = pairs[:, 0] * np.exp(1j * np.deg2rad(pairs[:, 1]))
        else:
            v = 10 ** (pairs[:, 0] / 20) * np.exp(1j * np.deg2rad(pairs[:, 1]))
        e = np.array([[v[0], v[2]], [v[1], v[3]]])
        out.append(ScatteringMatrix(e, z_ref, row[0] * unit))
    return out
