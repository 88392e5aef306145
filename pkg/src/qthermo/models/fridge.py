"""Three-qubit absorption refrigerator.

Qubits c (cold), h (hot), r (room) with gaps eps_c, eps_h,
eps_r = eps_c + eps_h (resonance enforced exactly), coupled by the
three-body exchange g(|001><110| + |110><001|) in the |c h r> product
basis. Each qubit exchanges photons with its own bosonic reservoir
(mu = 0); temperatures are expected ordered T_c <= T_r <= T_h.

A heat flow hot -> room drags heat out of the cold reservoir; the
tendency is captured by the single number I = 2g Im<sigma_r† sigma_c
sigma_h>, with J_c = -eps_c I, J_h = -eps_h I, J_r = +eps_r I.
"""

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..lindblad import (GKLSGenerator, JumpChannel, ThermoLedger, all_currents,
                        build_liouvillian, propagate, steady_state)
from ..qcore import dagger, expm_dense, kron, vectorize
from ..thermo import (ReservoirSpec, bose_einstein, effective_temperature,
                      fermi_dirac, gibbs_state)
from .common import IDENT2, LOWER

# Lowering operators in the |c h r> product basis (c most significant).
SIGMA_C = kron(LOWER, kron(IDENT2, IDENT2))
SIGMA_H = kron(IDENT2, kron(LOWER, IDENT2))
SIGMA_R = kron(IDENT2, kron(IDENT2, LOWER))
_NUM = {tag: dagger(op) @ op for tag, op in
        (("c", SIGMA_C), ("h", SIGMA_H), ("r", SIGMA_R))}


@dataclass(frozen=True)
class FridgeParams:
    """Gaps, three-body coupling, and three bosonic reservoirs by tag.

    ``reservoirs`` maps "c"/"h"/"r" to bosonic ReservoirSpec whose
    coupling is the *bare* rate (the one multiplying n_B and n_B + 1).
    ``eps_r`` defaults to eps_c + eps_h; passing anything else is an
    error (the resonance is exact by construction).
    """

    eps_c: float
    eps_h: float
    g: float
    reservoirs: Mapping[str, ReservoirSpec]
    eps_r: float = None

    def __post_init__(self):
        if self.eps_c <= 0 or self.eps_h <= 0:
            raise ValueError("qubit gaps must be positive")
        if self.eps_r is None:
            object.__setattr__(self, "eps_r", self.eps_c + self.eps_h)
        elif self.eps_r != self.eps_c + self.eps_h:
            raise ValueError(
                f"resonance violated: eps_r = {self.eps_r} != eps_c + eps_h "
                f"= {self.eps_c + self.eps_h} (must hold exactly)")
        object.__setattr__(self, "reservoirs", dict(self.reservoirs))
        if set(self.reservoirs) != {"c", "h", "r"}:
            raise ValueError("fridge requires reservoirs tagged 'c', 'h', 'r'")
        for tag, res in self.reservoirs.items():
            if res.statistics != "bosonic":
                raise ValueError(f"reservoir {tag!r} must be bosonic (mu = 0)")

    def gap(self, tag):
        return {"c": self.eps_c, "h": self.eps_h, "r": self.eps_r}[tag]

    def qubit_occupation(self, tag):
        """Fermi-form occupation n_F = 1/(e^{eps/k_B T} + 1) of one qubit."""
        res = self.reservoirs[tag]
        return fermi_dirac(self.gap(tag),
                           ReservoirSpec(res.temperature, 0.0, "fermionic"))

    def effective_rate(self, tag):
        """kappa = kappa_bare * n_B / n_F, the rate in the Fermi form."""
        res = self.reservoirs[tag]
        n_b = bose_einstein(self.gap(tag), res)
        return res.coupling * n_b / self.qubit_occupation(tag)


def hamiltonian(params):
    h0 = (params.eps_c * _NUM["c"] + params.eps_h * _NUM["h"]
          + params.eps_r * _NUM["r"])
    exchange = dagger(SIGMA_R) @ SIGMA_C @ SIGMA_H
    return h0 + params.g * (exchange + dagger(exchange)), h0


def fridge_generator(params):
    """(generator, ledger) on the 8-dimensional space.

    Channels sigma_a / sigma_a† with rates kappa_a (1 - n_F^a) and
    kappa_a n_F^a, where kappa_a = kappa_bare n_B^a / n_F^a; the pair is
    exactly the bosonic kappa_bare (n_B + 1) / kappa_bare n_B and obeys
    local detailed balance. Ledger: H_TD = H_0 (interaction neglected in
    the bookkeeping), no particle counting (photons, mu = 0).
    """
    h_s, h0 = hamiltonian(params)
    sigma = {"c": SIGMA_C, "h": SIGMA_H, "r": SIGMA_R}
    channels = []
    for tag in ("c", "h", "r"):
        kappa = params.effective_rate(tag)
        nf = params.qubit_occupation(tag)
        eps = params.gap(tag)
        channels.append(JumpChannel(sigma[tag], kappa * (1.0 - nf), tag,
                                    energy_quantum=eps, particle_quantum=0))
        channels.append(JumpChannel(dagger(sigma[tag]), kappa * nf, tag,
                                    energy_quantum=-eps, particle_quantum=0))
    gen = GKLSGenerator(h_s, tuple(channels))
    ledger = ThermoLedger(h0, np.zeros((8, 8)), params.reservoirs)
    return gen, ledger


def product_gibbs_state(params):
    """g = 0 steady state: product of the three single-qubit Gibbs states."""
    blocks = []
    for tag in ("c", "h", "r"):
        res = params.reservoirs[tag]
        h_qubit = params.gap(tag) * (dagger(LOWER) @ LOWER)
        blocks.append(gibbs_state(h_qubit, res))
    return kron(blocks[0], kron(blocks[1], blocks[2]))


def exchange_amplitude(params, rho):
    """I = 2g Im<sigma_r† sigma_c sigma_h> in the given state."""
    op = dagger(SIGMA_R) @ SIGMA_C @ SIGMA_H
    return float(2.0 * params.g * np.trace(op @ rho).imag)


def cooling_window_boundary(params):
    """Carnot COP of the absorption fridge,
    T_c (T_h - T_r) / (T_h (T_r - T_c)); cooling requires
    eps_c/eps_h <= this ratio."""
    t_c = params.reservoirs["c"].temperature
    t_h = params.reservoirs["h"].temperature
    t_r = params.reservoirs["r"].temperature
    return t_c * (t_h - t_r) / (t_h * (t_r - t_c))


def fridge_observables(params, consistency_tol=1e-9):
    """(I, J_c, J_h, J_r, theta, cooling?) at the steady state.

    The currents are evaluated twice, from the generic ledger bookkeeping
    and from the structural identities (-eps_c I, -eps_h I, +eps_r I);
    disagreement beyond ``consistency_tol`` (scaled) raises. theta is the
    effective temperature of the cold qubit.
    """
    gen, ledger = fridge_generator(params)
    rho = steady_state(gen)
    amp = exchange_amplitude(params, rho)
    currents = {tag: j for tag, (j, _) in all_currents(gen, ledger, rho).items()}
    structural = {"c": -params.eps_c * amp, "h": -params.eps_h * amp,
                  "r": params.eps_r * amp}
    scale = max(abs(amp) * params.eps_r, 1.0)
    for tag in ("c", "h", "r"):
        if abs(currents[tag] - structural[tag]) > consistency_tol * scale:
            raise RuntimeError(
                f"bookkeeping J_{tag} = {currents[tag]} disagrees with "
                f"structural value {structural[tag]}")
    occ = float(np.trace(_NUM["c"] @ rho).real)
    theta = effective_temperature(occ, params.eps_c) if occ < 0.5 else math.inf
    return (amp, currents["c"], currents["h"], currents["r"], theta, amp > 0.0)


def occupation_imbalance(params):
    """delta_n = n_c n_h (1 - n_r) - (1 - n_c)(1 - n_h) n_r at g = 0."""
    n_c = params.qubit_occupation("c")
    n_h = params.qubit_occupation("h")
    n_r = params.qubit_occupation("r")
    return n_c * n_h * (1.0 - n_r) - (1.0 - n_c) * (1.0 - n_h) * n_r


def fridge_perturbative_I(params):
    """Leading-order I = 4 g^2 delta_n / (kappa_c + kappa_h + kappa_r).

    Valid for g much smaller than the summed rates; the error is
    relative O(g/sum kappa)^... quadratic-in-g heat currents follow.
    """
    kappa_sum = sum(params.effective_rate(tag) for tag in ("c", "h", "r"))
    return 4.0 * params.g ** 2 * occupation_imbalance(params) / kappa_sum


def fridge_coherent_transient(params, t_max, n_steps, rho0=None):
    """Occupation and effective temperature of the cold qubit vs time.

    Starts from the product Gibbs state (the refrigerator-off fixed
    point) unless ``rho0`` is given; returns (times, occupations,
    thetas). For kappa -> 0 the occupation converges pointwise to
    n_F^c - delta_n sin^2(g t).
    """
    gen, _ = fridge_generator(params)
    rho = product_gibbs_state(params) if rho0 is None else np.asarray(rho0)
    times = np.linspace(0.0, t_max, n_steps)
    occs = np.empty(n_steps)
    if n_steps > 1:
        step_prop = expm_dense(build_liouvillian(gen), times[1] - times[0])
    vec = vectorize(rho.astype(complex))
    num_vec = vectorize(_NUM["c"]).conj()
    for j in range(n_steps):
        occs[j] = (num_vec @ vec).real
        if j + 1 < n_steps:
            vec = step_prop @ vec
    thetas = np.array([effective_temperature(p, params.eps_c) if 0 < p < 0.5
                       else math.inf for p in occs])
    return times, occs, thetas


def _golden_section_min(f, lo, hi, tol):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def fridge_switchoff_protocol(params, horizon_periods=3.0):
    """Locate the first transient minimum of the cold-qubit temperature.

    Coarse scan at step 0.01/g followed by golden-section refinement.
    Returns (t_min, theta_min, theta_ss). Raises RuntimeError when no
    interior minimum exists within ``horizon_periods`` exchange periods
    (e.g. when delta_n <= 0 and the occupation never dips).
    """
    if params.g <= 0:
        raise ValueError("protocol requires g > 0")
    gen, _ = fridge_generator(params)
    rho0 = product_gibbs_state(params)

    def occupation_at(t):
        return float(np.trace(_NUM["c"] @ propagate(gen, rho0, t)).real)

    horizon = horizon_periods * math.pi / params.g
    step = 0.01 / params.g
    n_coarse = int(horizon / step) + 1
    times, occs, _ = fridge_coherent_transient(params, horizon, n_coarse)
    interior = None
    for j in range(1, len(occs) - 1):
        if occs[j] <= occs[j - 1] and occs[j] <= occs[j + 1]:
            interior = j
            break
    if interior is None:
        raise RuntimeError("no occupation minimum found within the horizon")
    t_min, occ_min = _golden_section_min(
        occupation_at, times[interior - 1], times[interior + 1],
        tol=1e-10 / params.g)
    theta_min = effective_temperature(occ_min, params.eps_c)
    gen_ss, _ = fridge_generator(params)
    occ_ss = float(np.trace(_NUM["c"] @ steady_state(gen_ss)).real)
    theta_ss = effective_temperature(occ_ss, params.eps_c)
    return t_min, theta_min, theta_ss
