"""Optimal control: objective, Hamiltonian, adjoint system and the sweep.

The four controls are characterized pointwise from the state/adjoint pair
and improved by a relaxed forward-backward sweep: integrate the states
forward, the adjoints backward from a zero terminal condition, evaluate the
characterizations, then blend them into the previous controls with a convex
combination until the update stalls below tolerance.

State equations enter the Hamiltonian in the susceptible-inclusive
convention (each infection pressure multiplies its susceptible pool), which
is the convention the state system and the control characterizations share.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

from .errors import ConfigError, SweepDivergenceError
from .integrate import ControlPath, TimeGrid, Trajectory, rk4_backward, rk4_forward
from .model import ControlConst, StateVec, force_terms, rhs
from .params import ParamSet

__all__ = [
    "Weights",
    "AdjointVec",
    "SweepResult",
    "Mask",
    "STRATEGY_MASKS",
    "default_initial_state",
    "objective",
    "hamiltonian",
    "adjoint_rhs",
    "characterize_controls",
    "forward_backward_sweep",
    "write_controls_csv",
    "write_adjoints_csv",
]

Mask = tuple[bool, bool, bool, bool]

ALL_ON: Mask = (True, True, True, True)

# Strategy A: everything; B: education + treatment; C: treatment only;
# D: health promotion + dog vaccination.
STRATEGY_MASKS: dict[str, Mask] = {
    "A": (True, True, True, True),
    "B": (False, False, True, True),
    "C": (False, False, False, True),
    "D": (True, True, False, False),
}


class AdjointVec(NamedTuple):
    """Adjoint variables ordered like the state vector."""

    lam1: float
    lam2: float
    lam3: float
    lam4: float
    lam5: float
    lam6: float
    lam7: float
    lam8: float
    lam9: float
    lam10: float
    lam11: float
    lam12: float


ZERO_ADJOINT = AdjointVec(*(0.0,) * 12)


@dataclass(frozen=True)
class Weights:
    """Objective weights: state weights K1..K6 and control cost weights A1..A4.

    K6 enters the running cost negatively (susceptible domestic dogs are a
    benefit). Defaults keep the controls interior over part of the horizon.
    """

    K1: float = 1.0
    K2: float = 1.0
    K3: float = 1.0
    K4: float = 1.0
    K5: float = 1.0
    K6: float = 0.01
    A1: float = 50.0
    A2: float = 50.0
    A3: float = 50.0
    A4: float = 50.0

    def __post_init__(self) -> None:
        for name in ("K1", "K2", "K3", "K4", "K5", "K6"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"state weight {name} must be non-negative")
        for name in ("A1", "A2", "A3", "A4"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"control cost weight {name} must be positive")


@dataclass(frozen=True)
class SweepResult:
    """Converged (or truncated) output of the forward-backward sweep."""

    controls: ControlPath
    states: Trajectory
    adjoints: tuple[AdjointVec, ...]
    J_history: tuple[float, ...]
    iterations: int
    converged: bool


def default_initial_state(p: ParamSet) -> StateVec:
    """Default scenario: susceptibles at demographic balance, seeded infection."""
    return StateVec(
        S_H=p.theta1 / p.mu1, E_H=0.0, I_H=0.0, R_H=0.0,
        S_F=p.theta2 / p.mu2, E_F=20.0, I_F=50.0,
        S_D=p.theta3 / p.mu3, E_D=20.0, I_D=50.0, R_D=0.0, M=0.1,
    )


def running_cost(y: StateVec, u: ControlConst, w: Weights) -> float:
    return (
        w.K1 * y.M
        + w.K2 * y.E_H
        + w.K3 * y.I_H
        + w.K4 * y.E_D
        + w.K5 * y.I_D
        - w.K6 * y.S_D
        + 0.5 * (w.A1 * u.u1**2 + w.A2 * u.u2**2 + w.A3 * u.u3**2 + w.A4 * u.u4**2)
    )


def objective(states: Trajectory, u_path: ControlPath, w: Weights) -> float:
    """Trapezoidal quadrature of the running cost over the horizon."""
    if states.grid != u_path.grid:
        raise ConfigError("states and controls must share a grid")
    values = [
        running_cost(y, u, w) for y, u in zip(states.states, u_path.values)
    ]
    h = states.grid.h
    return h * (0.5 * (values[0] + values[-1]) + sum(values[1:-1]))


def hamiltonian(y: StateVec, lam: AdjointVec, u: ControlConst, w: Weights, p: ParamSet) -> float:
    """Running cost plus the adjoint-weighted state derivatives."""
    dy = rhs(0.0, y, u, p)
    return running_cost(y, u, w) + sum(l * d for l, d in zip(lam, dy))


def adjoint_rhs(
    y: StateVec, lam: AdjointVec, u: ControlConst, w: Weights, p: ParamSet
) -> AdjointVec:
    """Adjoint derivatives lam' = -dH/dy, derived analytically.

    The saturation term differentiates to C/(M+C)^2; the clamped control
    factors are constants with respect to the state.
    """
    ft = force_terms(y, u, p)
    f2 = ft.chi2
    a1 = max(0.0, 1.0 - u.u1 - u.u3)
    a2 = max(0.0, 1.0 - u.u1 - u.u2)
    f1 = p.tau1 * y.I_F + p.tau2 * y.I_D + p.tau3 * ft.lamM
    f3 = (
        p.psi1 * y.I_F / (1.0 + p.rho1)
        + p.psi2 * y.I_D / (1.0 + p.rho2)
        + p.psi3 * ft.lamM / (1.0 + p.rho3)
    )
    dlam_dM = p.C / (y.M + p.C) ** 2

    l1, l2, l3, l4, l5, l6, l7, l8, l9, l10, l11, l12 = lam

    d1 = (l1 - l2) * a1 * f1 + l1 * p.mu1
    d2 = -w.K2 + l2 * (p.mu1 + p.beta1 + p.beta2 + u.u4) - l3 * p.beta1 - l4 * (p.beta2 + u.u4)
    d3 = -w.K3 + l3 * (p.sigma1 + p.mu1) - l12 * p.nu1
    d4 = -l1 * p.beta3 + l4 * (p.beta3 + p.mu1)
    d5 = (l5 - l6) * f2 + l5 * p.mu2
    d6 = l6 * (p.mu2 + p.gamma) - l7 * p.gamma
    d7 = (
        (l1 - l2) * a1 * p.tau1 * y.S_H
        + (l5 - l6) * p.kappa1 * y.S_F
        + (l8 - l9) * a2 * p.psi1 * y.S_D / (1.0 + p.rho1)
        + l7 * (p.mu2 + p.sigma2)
        - l12 * p.nu2
    )
    d8 = w.K6 + (l8 - l9) * a2 * f3 + l8 * p.mu3
    d9 = (
        -w.K4
        + l9 * (p.mu3 + p.gamma1 + p.gamma2 + u.u4)
        - l10 * p.gamma1
        - l11 * (p.gamma2 + u.u4)
    )
    d10 = (
        -w.K5
        + (l1 - l2) * a1 * p.tau2 * y.S_H
        + (l5 - l6) * p.kappa2 * y.S_F
        + (l8 - l9) * a2 * p.psi2 * y.S_D / (1.0 + p.rho2)
        + l10 * (p.mu3 + p.sigma3)
        - l12 * p.nu3
    )
    d11 = -l8 * p.gamma3 + l11 * (p.mu3 + p.gamma3)
    d12 = (
        -w.K1
        + dlam_dM
        * (
            (l1 - l2) * a1 * p.tau3 * y.S_H
            + (l5 - l6) * p.kappa3 * y.S_F
            + (l8 - l9) * a2 * p.psi3 * y.S_D / (1.0 + p.rho3)
        )
        + l12 * p.mu4
    )
    return AdjointVec(d1, d2, d3, d4, d5, d6, d7, d8, d9, d10, d11, d12)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def characterize_controls(
    y: StateVec, lam: AdjointVec, w: Weights, p: ParamSet, mask: Mask = ALL_ON
) -> ControlConst:
    """Pointwise optimal controls from the maximality condition, clamped to [0,1]."""
    lamM = y.M / (y.M + p.C)
    human_term = (p.tau1 * y.I_F + p.tau2 * y.I_D + p.tau3 * lamM) * y.S_H
    G = (
        p.psi1 * y.I_F / (1.0 + p.rho1)
        + p.psi2 * y.I_D / (1.0 + p.rho2)
        + p.psi3 * lamM / (1.0 + p.rho3)
    )
    domestic_term = G * y.S_D
    dl_h = lam.lam2 - lam.lam1
    dl_d = lam.lam9 - lam.lam8

    u1 = _clamp01((dl_h * human_term + dl_d * domestic_term) / w.A1) if mask[0] else 0.0
    u2 = _clamp01(dl_d * domestic_term / w.A2) if mask[1] else 0.0
    u3 = _clamp01(dl_h * human_term / w.A3) if mask[2] else 0.0
    u4 = (
        _clamp01((y.E_H * (lam.lam2 - lam.lam4) + y.E_D * (lam.lam9 - lam.lam11)) / w.A4)
        if mask[3]
        else 0.0
    )
    return ControlConst(u1, u2, u3, u4)


def forward_backward_sweep(
    p: ParamSet,
    w: Weights,
    y0: StateVec,
    grid: TimeGrid,
    mask: Mask = ALL_ON,
    omega: float = 0.5,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> SweepResult:
    """Relaxed forward-backward sweep until the control update stalls.

    Each iteration integrates the states forward under the current controls,
    the adjoints backward from the zero terminal condition, evaluates the
    pointwise characterizations, and blends: u <- (1-omega) u + omega u*.
    Stops when the sup-norm control update drops below ``tol``. The returned
    states/adjoints are recomputed under the final controls so the triple is
    self-consistent.

    Raises:
        SweepDivergenceError: if the objective runs away from its best value.
    """
    if not 0.0 < omega <= 1.0:
        raise ConfigError(f"relaxation omega must lie in (0, 1], got {omega}")
    if not tol > 0.0:
        raise ConfigError(f"tolerance must be positive, got {tol}")

    u_path = ControlPath.constant(grid, mask=mask)
    J_history: list[float] = []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        states = rk4_forward(p, u_path, y0, grid)
        adjoints = rk4_backward(
            lambda t, lam, y, u: adjoint_rhs(y, AdjointVec(*lam), u, w, p),
            states,
            u_path,
            ZERO_ADJOINT,
        )
        J = objective(states, u_path, w)
        J_history.append(J)
        J_min = min(J_history)
        if J - J_min > 10.0 * max(1.0, abs(J_min)):
            raise SweepDivergenceError(
                f"objective diverged after {iterations} iterations "
                f"(J = {J:.6g} vs best {J_min:.6g}); try a smaller omega"
            )

        new_values = []
        delta = 0.0
        for y, lam, u_old in zip(states.states, adjoints, u_path.values):
            u_star = characterize_controls(y, AdjointVec(*lam), w, p, mask)
            u_new = ControlConst(
                *((1.0 - omega) * a + omega * b for a, b in zip(u_old, u_star))
            )
            delta = max(delta, max(abs(a - b) for a, b in zip(u_new, u_old)))
            new_values.append(u_new)
        u_path = u_path.with_values(new_values)
        if delta < tol:
            converged = True
            break

    states = rk4_forward(p, u_path, y0, grid)
    adjoints = rk4_backward(
        lambda t, lam, y, u: adjoint_rhs(y, AdjointVec(*lam), u, w, p),
        states,
        u_path,
        ZERO_ADJOINT,
    )
    J_history.append(objective(states, u_path, w))
    return SweepResult(
        controls=u_path,
        states=states,
        adjoints=tuple(AdjointVec(*lam) for lam in adjoints),
        J_history=tuple(J_history),
        iterations=iterations,
        converged=converged,
    )


def write_controls_csv(u_path: ControlPath, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "u1", "u2", "u3", "u4"])
        for t, u in zip(u_path.grid.times(), u_path.values):
            writer.writerow([repr(t)] + [repr(v) for v in u])


def write_adjoints_csv(
    grid: TimeGrid, adjoints: Sequence[AdjointVec], path: str | Path
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"lam{i}" for i in range(1, 13)])
        for t, lam in zip(grid.times(), adjoints):
            writer.writerow([repr(t)] + [repr(v) for v in lam])


def write_sweep_summary_json(
    result: SweepResult, path: str | Path, config_echo: dict | None = None
) -> None:
    payload = {
        "J_history": list(result.J_history),
        "iterations": result.iterations,
        "converged": result.converged,
        "mask": list(result.controls.mask),
    }
    if config_echo is not None:
        payload["config"] = config_echo
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
