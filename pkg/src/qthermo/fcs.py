"""Full counting statistics: tilted Liouvillians, cumulants, and the TUR.

A counting field chi multiplies the jump part L rho L† of selected
channels by e^{i chi w} where w is the per-channel weight (net particles,
heat quanta omega - mu n, or chemical work mu n). The dominant eigenvalue
of the tilted Liouvillian is the scaled cumulant generating function in
the long-time limit; its chi-derivatives at 0 are the current cumulants.
"""

import cmath
import math
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from .qcore import KB, expm_dense, vectorize
from .lindblad import build_liouvillian


class CountingError(RuntimeError):
    pass


@dataclass(frozen=True)
class CountingField:
    """One named counting field with its per-channel weight vector."""

    name: str
    weights: Tuple[float, ...]


@dataclass(frozen=True)
class CountingConfig:
    """A set of counting fields for one generator.

    All fields at zero reproduce the bare Liouvillian exactly (bitwise:
    the assembly path is shared with :func:`build_liouvillian`).
    """

    fields: Tuple[CountingField, ...]

    def field(self, name):
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    @staticmethod
    def particle(gen, reservoir, name=None):
        """Count net particles entering ``reservoir`` (weight = n per jump)."""
        weights = tuple(
            float(ch.particle_quantum) if ch.reservoir == reservoir else 0.0
            for ch in gen.channels)
        if all(w == 0.0 for w in weights):
            raise CountingError(f"no counted transitions for reservoir "
                                f"{reservoir!r}")
        return CountingConfig((CountingField(name or f"n_{reservoir}",
                                             weights),))

    @staticmethod
    def heat_and_work(gen, ledger):
        """Joint heat/work fields chi_a, lambda_a for every reservoir.

        Heat weight per jump is omega - mu_a n, work weight is mu_a n.
        """
        fields = []
        for alpha in gen.reservoirs():
            mu = ledger.reservoirs[alpha].chemical_potential
            q = tuple((ch.energy_quantum - mu * ch.particle_quantum)
                      if ch.reservoir == alpha else 0.0
                      for ch in gen.channels)
            w = tuple(mu * ch.particle_quantum if ch.reservoir == alpha else 0.0
                      for ch in gen.channels)
            fields.append(CountingField(f"chi_{alpha}", q))
            fields.append(CountingField(f"lambda_{alpha}", w))
        return CountingConfig(tuple(fields))


def counting_liouvillian(gen, cfg, values: Mapping[str, complex]):
    """Tilted Liouvillian with jump terms multiplied by e^{i sum chi_f w_f}.

    Anticommutator and Hamiltonian parts are untouched; with every field
    zero the result is bitwise-equal to ``build_liouvillian(gen)``.
    """
    unknown = set(values) - {f.name for f in cfg.fields}
    if unknown:
        raise CountingError(f"unknown counting fields {sorted(unknown)}")
    phases = np.zeros(len(gen.channels), dtype=complex)
    for f in cfg.fields:
        chi = values.get(f.name, 0.0)
        if chi != 0.0:
            phases = phases + chi * np.asarray(f.weights)
    tilted = build_liouvillian(gen)
    for k, ch in enumerate(gen.channels):
        if phases[k] != 0.0:
            factor = cmath.exp(1j * phases[k]) - 1.0
            jump = np.kron(ch.operator.conj(), ch.operator)
            tilted = tilted + ch.rate * factor * jump
    return tilted


def cgf(gen, cfg, values, t, rho0, n_steps=None):
    """Finite-time cumulant generating function ln Tr{e^{L(chi) t} rho0}.

    The complex log is accumulated stepwise along the evolution (with
    trace renormalization), so the imaginary part is continuously
    unwrapped instead of being folded into (-pi, pi]; without this the
    long-time slope of S would be meaningless. Exactly zero at all-zero
    fields (trace preservation is exact by construction). A numerically
    vanishing trace raises with diagnostics.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    if t == 0 or all(complex(v) == 0 for v in values.values()):
        return 0.0 + 0.0j
    tilted = counting_liouvillian(gen, cfg, values)
    if n_steps is None:
        # keep the per-step phase advance well below pi; the Frobenius
        # norm upper-bounds the spectral radius and is cheap
        n_steps = max(8, int(math.ceil(np.linalg.norm(tilted) * t)))
    step = expm_dense(tilted, t / n_steps)
    vec = vectorize(np.asarray(rho0, dtype=complex))
    tr_vec = vectorize(np.eye(gen.dim)).conj()
    total = 0.0 + 0.0j
    for j in range(n_steps):
        vec = step @ vec
        z = complex(tr_vec @ vec)
        if z == 0 or not (np.isfinite(z.real) and np.isfinite(z.imag)):
            raise CountingError(
                f"characteristic function Tr = {z} after step {j + 1}/"
                f"{n_steps} at t = {t}; cannot take log")
        total += cmath.log(z)
        vec = vec / z
    return total


def dominant_eigenvalue(matrix):
    """Eigenvalue with the largest real part."""
    values = np.linalg.eigvals(np.asarray(matrix, dtype=complex))
    return complex(values[np.argmax(values.real)])


def spectral_gap(matrix):
    """|Re| of the second-slowest eigenvalue (decay rate toward the kernel)."""
    values = np.linalg.eigvals(np.asarray(matrix, dtype=complex))
    real = np.sort(values.real)[::-1]
    return float(-real[1])


def dominant_eigenvalue_path(gen, cfg, name, chis):
    """nu(chi) along a grid, tracked by continuity from chi = chis[0].

    Uses nearest-eigenvalue continuation so branch crossings do not make
    the curve jump between Liouvillian bands.
    """
    out = np.empty(len(chis), dtype=complex)
    prev = None
    for j, chi in enumerate(chis):
        values = np.linalg.eigvals(counting_liouvillian(gen, cfg, {name: chi}))
        if prev is None:
            pick = values[np.argmax(values.real)]
        else:
            pick = values[np.argmin(np.abs(values - prev))]
        out[j] = pick
        prev = pick
    return out


# Order-dependent base steps for the chi finite differences: fourth-order
# stencils divide by h^3 / h^4, so larger bases are needed to stay above
# double-precision eigenvalue noise.
_BASE_STEPS = {1: 1e-3, 2: 1e-3, 3: 0.05, 4: 0.2}

_STENCILS = {
    1: ((1, 0.5), (-1, -0.5)),
    2: ((1, 1.0), (0, -2.0), (-1, 1.0)),
    3: ((2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)),
    4: ((2, 1.0), (1, -4.0), (0, 6.0), (-1, -4.0), (-2, 1.0)),
}


@dataclass(frozen=True)
class CumulantReport:
    """One scaled cumulant <<n^k>>/t with the method that produced it."""

    order: int
    value: float
    method: str
    step: float


def _central_derivative(f, order, h):
    acc = 0.0 + 0.0j
    for offset, weight in _STENCILS[order]:
        acc += weight * f(offset * h)
    return acc / h ** order


def _richardson(f, order, h):
    # central stencils have even error series: two levels remove h^2, h^4
    d1, d2, d3 = (_central_derivative(f, order, s) for s in (h, h / 2, h / 4))
    r1 = (4.0 * d2 - d1) / 3.0
    r2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def cumulants(gen, cfg, name, max_order=4, steps=None, method="eigenvalue-derivative",
              gap_floor=1e-12, rho0=None):
    """Scaled cumulants (-i d/dchi)^k nu_max(0) for k = 1..max_order.

    Derivatives are central finite differences with two Richardson
    levels; base steps are order-dependent (see _BASE_STEPS, overridable
    via ``steps``). ``method="long-time-slope"`` differentiates the slope
    (S(chi, 2t) - S(chi, t))/t at t = 50/gap instead of the eigenvalue.
    A dominant-eigenvalue crossing at chi = 0 (spectral gap below
    ``gap_floor``) is an error.
    """
    bare = build_liouvillian(gen)
    nu0 = dominant_eigenvalue(bare)
    gap = spectral_gap(bare)
    if abs(nu0) > 1e-8 or gap < gap_floor:
        raise CountingError(
            f"dominant eigenvalue not unique/zero at chi = 0 "
            f"(nu = {nu0:.2e}, gap = {gap:.2e})")

    if method == "eigenvalue-derivative":
        def f(chi):
            if chi == 0.0:
                return 0.0 + 0.0j
            return dominant_eigenvalue(counting_liouvillian(gen, cfg,
                                                            {name: chi}))
    elif method == "long-time-slope":
        if rho0 is None:
            raise ValueError("long-time-slope needs an initial state rho0")
        t = 50.0 / gap

        def f(chi):
            values = {name: chi}
            s1 = cgf(gen, cfg, values, t, rho0)
            s2 = cgf(gen, cfg, values, 2 * t, rho0)
            return (s2 - s1) / t
    else:
        raise ValueError(f"unknown method {method!r}")

    steps = {**_BASE_STEPS, **(steps or {})}
    out = []
    for order in range(1, max_order + 1):
        h = steps[order]
        val = (-1j) ** order * _richardson(f, order, h)
        out.append(CumulantReport(order, float(val.real), method, h))
    return out


@dataclass(frozen=True)
class TURAudit:
    ratio: float
    bound: float
    satisfied: bool  # None when the bound is indeterminate (sigma_dot <= 0)


def tur_audit(mean_current, variance_rate, sigma_dot):
    """Thermodynamic uncertainty relation check.

    ratio = <<I^2>>/<I>^2, bound = 2 k_B / Sigma_dot, satisfied iff
    ratio >= bound. Provable for classical Markov dynamics; reported, not
    enforced, since quantum-coherent generators may violate it. At
    Sigma_dot <= 0 the bound is infinite and ``satisfied`` is None.
    """
    if mean_current == 0.0:
        raise ValueError("TUR audit needs a nonzero mean current")
    ratio = variance_rate / mean_current ** 2
    if sigma_dot <= 0.0:
        return TURAudit(ratio, math.inf, None)
    return TURAudit(ratio, 2.0 * KB / sigma_dot, ratio >= 2.0 * KB / sigma_dot)


def tur_engine_form(power_out, eta, eta_carnot, t_cold, power_variance_rate):
    """Heat-engine TUR combination P eta/(eta - eta_C) k_B T_c / <<P^2>>.

    Evaluated literally as printed (denominator eta - eta_C, negative in
    the engine regime); the classical bound is <= 1/2.
    """
    if power_variance_rate <= 0.0:
        raise ValueError("power noise must be positive")
    if eta == eta_carnot:
        raise ValueError("eta = eta_C makes the combination singular")
    return (power_out * eta / (eta - eta_carnot)
            * KB * t_cold / power_variance_rate)
