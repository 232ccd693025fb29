"""Efficiency and rate bookkeeping for the collection chain.

Cavity coupling is estimated from lifetime shortening (beta = 1 - tau_on /
tau_off against the off-resonance reference), the optical train is a plain
product of stage efficiencies, and source collection efficiency follows
from the detected count rate once the excitation repetition rate and system
efficiency are known.  Values are kept at full precision; rounding happens
only in display layers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass


def beta_factor(tau_on_ps: float, tau_off_ps: float) -> float:
    """Fraction of emission funneled into the cavity mode, 1 - tau_on/tau_off.

    tau_on is the cavity-coupled lifetime, tau_off the uncoupled reference.
    A negative result (emitter slower than the reference) is allowed but
    flagged with a warning.
    """
    if tau_on_ps <= 0 or tau_off_ps <= 0:
        raise ValueError("lifetimes must be positive")
    beta = 1.0 - tau_on_ps / tau_off_ps
    if beta < 0:
        warnings.warn(
            f"beta factor {beta:.4f} is negative: tau_on exceeds the reference",
            stacklevel=2,
        )
    return beta


@dataclass
class EfficiencyChain:
    """Ordered optical stages as (label, efficiency-in-[0,1]) pairs."""

    stages: list

    def __post_init__(self):
        if not self.stages:
            raise ValueError("chain must contain at least one stage")
        for label, eff in self.stages:
            if not 0.0 <= eff <= 1.0:
                raise ValueError(f"stage {label!r} efficiency {eff} outside [0, 1]")

    def labels(self):
        return [label for label, _ in self.stages]


def chain_efficiency(chain) -> float:
    """Product of stage efficiencies; accepts EfficiencyChain or bare numbers."""
    if isinstance(chain, EfficiencyChain):
        values = [eff for _, eff in chain.stages]
    else:
        values = list(chain)
        if values and isinstance(values[0], (tuple, list)):
            values = [eff for _, eff in values]
    if not values:
        raise ValueError("chain must contain at least one stage")
    out = 1.0
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"stage efficiency {v} outside [0, 1]")
        out *= v
    return out


def collection_efficiency(count_rate_hz: float, rep_rate_hz: float, system_eff: float) -> float:
    """Photons collected into the first lens per excitation pulse.

    count_rate / (rep_rate * system_efficiency): what fraction of pulses
    yields a photon at the objective, given the downstream losses.
    """
    if count_rate_hz < 0:
        raise ValueError("count_rate_hz must be non-negative")
    if rep_rate_hz <= 0:
        raise ValueError("rep_rate_hz must be positive")
    if not 0.0 < system_eff <= 1.0:
        raise ValueError("system_eff must be in (0, 1]")
    return count_rate_hz / (rep_rate_hz * system_eff)


def default_chain() -> EfficiencyChain:
    return EfficiencyChain(
        [
            ("optics", 0.41),
            ("spectrometer", 0.42),
            ("fiber", 0.48),
            ("detector", 0.20),
        ]
    )


def budget_report(
    tau_on_a_ps: float = 1120.0,
    tau_on_b_ps: float = 1060.0,
    tau_off_ps: float = 3200.0,
    chain: EfficiencyChain | None = None,
    count_rate_a_hz: float = 6000.0,
    count_rate_b_hz: float = 7800.0,
    rep_rate_hz: float = 5e6,
) -> dict:
    """Full-precision budget summary as a key-value mapping."""
    chain = chain or default_chain()
    sys_eff = chain_efficiency(chain)
    report = {
        "beta.dot_a": beta_factor(tau_on_a_ps, tau_off_ps),
        "beta.dot_b": beta_factor(tau_on_b_ps, tau_off_ps),
        "lifetime.dot_a_ps": tau_on_a_ps,
        "lifetime.dot_b_ps": tau_on_b_ps,
        "lifetime.reference_ps": tau_off_ps,
    }
    for label, eff in chain.stages:
        report[f"stage.{label}"] = eff
    report["system_efficiency"] = sys_eff
    report["rep_rate_hz"] = rep_rate_hz
    report["count_rate.dot_a_hz"] = count_rate_a_hz
    report["count_rate.dot_b_hz"] = count_rate_b_hz
    report["collection.dot_a"] = collection_efficiency(count_rate_a_hz, rep_rate_hz, sys_eff)
    report["collection.dot_b"] = collection_efficiency(count_rate_b_hz, rep_rate_hz, sys_eff)
    return report
