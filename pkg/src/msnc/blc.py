"""Branch-line coupler with arbitrary terminations on its output arms.

Even/odd half-circuit analysis: a unit wave enters port 1, ports 2 and 3 are
loaded with the even- or odd-mode impedance, and the four port amplitudes are
recombined from the half-circuit reflection and transmission coefficients.

The power-transfer ratio ``k`` fixes the output amplitudes to
``a2 = -j k/sqrt(2)`` and ``a3 = -k/sqrt(2)``; :func:`solve_za_for_k` inverts
that relation for the required terminations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .netalg import TwoPortAbcd, mag_db

SQRT2 = math.sqrt(2.0)

# Curve-fit polynomials for the required terminations, highest power first.
FIT_REAL = (55.1, -8.0, 1.8)
FIT_IMAG = (70.0, -77.6, 6.9, -1.1)

RESIDUAL_TOL = 1e-8


class BlcError(ValueError):
    pass


class NoSolutionError(BlcError):
    def __init__(self, k: float, best_residual: float):
        super().__init__(f"no passive termination found for k={k}; best residual {best_residual:.3e}")
        self.k = k
        self.best_residual = best_residual


@dataclass(frozen=True)
class BlcSpec:
    z0: float = 50.0
    freq_design: float = 680e6
    z_source: float = 50.0
    # "printed": transmission denominator (A+D)Z_A + B + C Z_S Z_A.
    # "standard": transmission denominator A Z_A + B + C Z_S Z_A + D Z_S.
    t_form: str = "printed"

    def __post_init__(self) -> None:
        if not self.z0 > 0 or not self.z_source > 0:
            raise BlcError("z0 and z_source must be positive")
        if self.t_form not in ("printed", "standard"):
            raise BlcError(f"unknown t_form {self.t_form!r}")


@dataclass(frozen=True)
class EvenOddCoefficients:
    gamma_e: complex
    gamma_o: complex
    t_e: complex
    t_o: complex


@dataclass(frozen=True)
class KSolution:
    k: float
    z_ae: complex
    z_ao: complex
    a1: complex
    a2: complex
    a3: complex
    a4: complex
    residual: float


@dataclass(frozen=True)
class FitCoefficients:
    real_poly: tuple[float, ...]
    imag_poly: tuple[float, ...]
    max_dev_real: float = float("nan")
    max_dev_imag: float = float("nan")


def even_odd_abcd(spec: BlcSpec = BlcSpec()) -> tuple[TwoPortAbcd, TwoPortAbcd]:
    """Half-circuit matrices: symmetry plane open (even) and shorted (odd)."""
    z0, f = spec.z0, spec.freq_design
    even = TwoPortAbcd(-1 / SQRT2, 1j * z0 / SQRT2, 1j / (z0 * SQRT2), -1 / SQRT2, f)
    odd = TwoPortAbcd(1 / SQRT2, 1j * z0 / SQRT2, 1j / (z0 * SQRT2), 1 / SQRT2, f)
    return even, odd


def _t_coeffs(m: TwoPortAbcd, z_s: float, t_form: str) -> tuple[complex, complex]:
    """Return (p, q) with the transmission denominator written as p*z_a + q."""
    if t_form == "printed":
        return m.a + m.d + m.c * z_s, m.b
    return m.a + m.c * z_s, m.b + m.d * z_s


def gamma_t(
    mode_abcd: TwoPortAbcd, z_s: float, z_a: complex, t_form: str = "printed"
) -> tuple[complex, complex]:
    """Reflection and transmission of one half-circuit terminated in ``z_a``.

    The reflection uses the usual source-referenced form. ``t_form`` selects
    the transmission denominator (see :class:`BlcSpec`); both forms agree
    when ``z_a == z_s``.
    """
    if not z_s > 0:
        raise BlcError("source impedance must be positive")
    z_a = complex(z_a)
    if z_a.real < -1e-9:
        raise BlcError("termination must be passive")
    m = mode_abcd
    num = m.a * z_a + m.b - m.c * z_s * z_a - m.d * z_s
    den = m.a * z_a + m.b + m.c * z_s * z_a + m.d * z_s
    p, q = _t_coeffs(m, z_s, t_form)
    t_den = p * z_a + q
    if abs(den) < 1e-300 or abs(t_den) < 1e-300:
        raise BlcError("degenerate termination: zero denominator")
    return complex(num / den), complex(2 * z_a / t_den)


def coefficients(z_ae: complex, z_ao: complex, spec: BlcSpec = BlcSpec()) -> EvenOddCoefficients:
    even, odd = even_odd_abcd(spec)
    ge, te = gamma_t(even, spec.z_source, complex(z_ae), spec.t_form)
    go, to = gamma_t(odd, spec.z_source, complex(z_ao), spec.t_form)
    return EvenOddCoefficients(ge, go, te, to)


def port_amplitudes(c: EvenOddCoefficients) -> tuple[complex, complex, complex, complex]:
    return (
        (c.gamma_e + c.gamma_o) / 2,
        (c.t_e + c.t_o) / 2,
        (c.t_e - c.t_o) / 2,
        (c.gamma_e - c.gamma_o) / 2,
    )


def target_amplitudes(k: float) -> tuple[complex, complex]:
    return -1j * k / SQRT2, complex(-k / SQRT2)


def evaluate_fit(k: float | np.ndarray) -> tuple[complex, complex]:
    """Closed-form (z_ae, z_ao) from the published polynomials."""
    re = np.polyval(FIT_REAL, k)
    im = np.polyval(FIT_IMAG, k)
    return re + 1j * im, re - 1j * im


def _residual(z: np.ndarray, k: float, spec: BlcSpec) -> np.ndarray:
    c = coefficients(complex(z[0], z[1]), complex(z[2], z[3]), spec)
    _, a2, a3, _ = port_amplitudes(c)
    t2, t3 = target_amplitudes(k)
    r2, r3 = a2 - t2, a3 - t3
    return np.array([r2.real, r2.imag, r3.real, r3.imag])


def _jacobian(z: np.ndarray, spec: BlcSpec) -> np.ndarray:
    # T(z) = 2z/(p z + q) is holomorphic, so dT/dz gives the real 2x2 block
    # [[Re, -Im], [Im, Re]] of the 4x4 Jacobian.
    even, odd = even_odd_abcd(spec)
    blocks = []
    for m, zz in ((even, complex(z[0], z[1])), (odd, complex(z[2], z[3]))):
        p, q = _t_coeffs(m, spec.z_source, spec.t_form)
        dt = 2 * q / (p * zz + q) ** 2
        blocks.append(np.array([[dt.real, -dt.imag], [dt.imag, dt.real]]) / 2)
    be, bo = blocks
    return np.block([[be, bo], [be, -bo]])


def _newton(z0: np.ndarray, k: float, spec: BlcSpec, max_iter: int = 60) -> tuple[np.ndarray, float]:
    z = z0.astype(float).copy()
    r = _residual(z, k, spec)
    norm = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if norm <= RESIDUAL_TOL * 1e-3:
            break
        try:
            step = np.linalg.solve(_jacobian(z, spec), -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-6:
            trial = z + lam * step
            try:
                rt = _residual(trial, k, spec)
            except ValueError:
                rt = None
            if rt is not None and np.linalg.norm(rt) < norm:
                z, r, norm = trial, rt, float(np.linalg.norm(rt))
                break
            lam *= 0.5
        else:
            break
    return z, norm


def _seeds(k: float, spec: BlcSpec) -> list[np.ndarray]:
    fe, fo = evaluate_fit(k)
    z0 = spec.z0
    pairs = [
        (complex(z0), complex(z0)),
        (fe, fo),
        (complex(z0 * k), complex(z0 * k)),
        (complex(5.0, -5.0), complex(5.0, 5.0)),
        (complex(z0, -z0), complex(z0, z0)),
        (complex(2 * z0), complex(2 * z0)),
        (complex(1.0), complex(1.0)),
        (complex(z0 / 2, z0 / 2), complex(z0 / 2, -z0 / 2)),
    ]
    return [np.array([a.real, a.imag, b.real, b.imag]) for a, b in pairs]


def solve_za_for_k(k: float, spec: BlcSpec = BlcSpec()) -> KSolution:
    """Terminations (z_ae, z_ao) that give power-transfer ratio ``k``.

    Damped Newton from eight seeds; among passive roots within tolerance the
    one closest to the curve-fit prediction wins.
    """
    if not 0 < k <= 1:
        raise BlcError(f"k must lie in (0, 1], got {k}")
    fe, fo = evaluate_fit(k)
    best_res = math.inf
    accepted: list[tuple[float, np.ndarray, float]] = []
    for seed in _seeds(k, spec):
        z, res = _newton(seed, k, spec)
        best_res = min(best_res, res)
        if res <= RESIDUAL_TOL and z[0] >= -1e-12 and z[2] >= -1e-12:
            dist = abs(complex(z[0], z[1]) - fe) + abs(complex(z[2], z[3]) - fo)
            accepted.append((dist, z, res))
    if not accepted:
        raise NoSolutionError(k, best_res)
    _, z, res = min(accepted, key=lambda t: t[0])
    z_ae = complex(max(z[0], 0.0), z[1])
    z_ao = complex(max(z[2], 0.0), z[3])
    a1, a2, a3, a4 = port_amplitudes(coefficients(z_ae, z_ao, spec))
    return KSolution(k, z_ae, z_ao, a1, a2, a3, a4, res)


def default_k_grid() -> np.ndarray:
    return np.round(np.arange(1, 51) * 0.02, 10)


def s_params_vs_k(k_grid: Sequence[float], spec: BlcSpec = BlcSpec()) -> list[dict]:
    """Solve every k and tabulate terminations and |S_i1| in dB."""
    rows = []
    for k in k_grid:
        sol = solve_za_for_k(float(k), spec)
        rows.append(
            {
                "k": float(k),
                "re_zae": sol.z_ae.real,
                "im_zae": sol.z_ae.imag,
                "re_zao": sol.z_ao.real,
                "im_zao": sol.z_ao.imag,
                "s11_db": mag_db(sol.a1),
                "s21_db": mag_db(sol.a2),
                "s31_db": mag_db(sol.a3),
                "s41_db": mag_db(sol.a4),
            }
        )
    return rows


def refit(k_grid: Sequence[float], solutions: Sequence[KSolution]) -> FitCoefficients:
    """Least-squares quadratic (real) and cubic (imaginary) fit of z_ae(k)."""
    k = np.asarray(k_grid, dtype=float)
    if len(k) < 5 or len(solutions) != len(k):
        raise BlcError("refit needs at least 5 matching samples")
    z = np.array([s.z_ae for s in solutions])
    pr = np.polyfit(k, z.real, 2)
    pi = np.polyfit(k, z.imag, 3)
    fe, _ = evaluate_fit(k)
    return FitCoefficients(
        tuple(float(c) for c in pr),
        tuple(float(c) for c in pi),
        float(np.max(np.abs(z.real - fe.real))),
        float(np.max(np.abs(z.imag - fe.imag))),
    )
