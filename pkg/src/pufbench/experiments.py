"""Table-shaped experiments shared by the command line driver and the test suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .puf import OaxPuf, Topology, calibrate_instability, calibrate_noise, format_topology
from .rng import RngLike, as_rng_seed

BER_SWEEP: dict[str, list[Topology]] = {
    "z": [(2, 2, z) for z in range(2, 7)],
    "x": [(x, 2, 2) for x in range(2, 7)],
    "y": [(2, y, 2) for y in range(2, 7)],
}

UNIFORMITY_TABLE: list[Topology] = [
    (1, 2, 2), (2, 1, 2), (2, 2, 1),
    (2, 2, 2), (1, 3, 2), (3, 1, 2), (2, 3, 1),
    (3, 2, 2), (2, 3, 2), (2, 2, 3), (2, 4, 1),
    (4, 2, 2), (2, 4, 2), (2, 2, 4), (2, 5, 1),
    (5, 2, 2), (2, 5, 2), (2, 2, 5), (2, 6, 1),
]

# member instability band of the published CMA-ES experiments
MEMBER_BER_BAND = (0.055, 0.085)


def sweep_topologies() -> list[Topology]:
    """The nine distinct configurations of the three sweeps, in first-seen order."""
    seen: list[Topology] = []
    for tops in BER_SWEEP.values():
        for t in tops:
            if t not in seen:
                seen.append(t)
    return seen


@dataclass
class BerRow:
    topology: Topology
    analytic: float
    exact: float
    empirical: metrics.EmpiricalEstimate
    member_ber: float

    def as_dict(self) -> dict:
        return {"topology": format_topology(self.topology), "analytic": self.analytic,
                "exact_oracle": self.exact, "empirical": self.empirical.as_dict(),
                "member_ber_mean": self.member_ber}


def ber_row(topology: Topology, beta: float = 0.06, n: int = 64, num_challenges: int = 100_000,
            repeats: int = 1, rng: RngLike = None, member_check: int = 20_000, instances: int = 100) -> BerRow:
    """Monte-Carlo OAX flip rate with every member's noise calibrated to flip rate ``beta``.

    The challenges are spread over ``instances`` fresh PUFs.  A single
    instance's block flip rates depend on its particular weight vectors, while
    the closed forms describe the average instance.
    """
    root = as_rng_seed(rng).substream("ber-row", format_topology(topology))
    instances = max(1, min(int(instances), num_challenges))
    flips = 0
    member_rates = []
    for i in range(instances):
        size = num_challenges // instances + (i < num_challenges % instances)
        p = calibrate_noise(OaxPuf.sample(topology, n, 0.0, root.substream("puf", i)), beta)
        est = metrics.measure_ber(p, size, repeats, root.substream("measure", i))
        flips += round(est.value * size * repeats)
        if i < 10:  # member flip rates on a few instances, as a calibration check
            members = metrics.measure_member_ber(p, max(1, member_check // 10), 1, root.substream("members", i))
            member_rates += [m.value for m in members]
    empirical = metrics.EmpiricalEstimate(flips / (num_challenges * repeats), num_challenges, repeats)
    return BerRow(tuple(topology), metrics.beta_oax(*topology, beta), metrics.exact_beta_oax(*topology, beta),
                  empirical, float(np.mean(member_rates)))


def ber_sweep(beta: float = 0.06, n: int = 64, num_challenges: int = 100_000, rng: RngLike = None,
              instances: int = 100) -> list[BerRow]:
    return [ber_row(t, beta, n, num_challenges, 1, rng, instances=instances) for t in sweep_topologies()]


@dataclass
class UniformityRow:
    topology: Topology
    analytic: metrics.UniformityProfile
    empirical: metrics.UniformityProfile
    single_instance: metrics.UniformityProfile
    sample_count: int
    instances: int

    def as_dict(self) -> dict:
        return {"topology": format_topology(self.topology), "analytic": self.analytic.as_dict(),
                "empirical": self.empirical.as_dict(), "single_instance": self.single_instance.as_dict(),
                "sample_count": self.sample_count, "instances": self.instances}


def _mean_profile(profiles: list[metrics.UniformityProfile]) -> metrics.UniformityProfile:
    keys = list(profiles[0].as_dict())
    return metrics.UniformityProfile(**{k: float(np.mean([getattr(p, k) for p in profiles])) for k in keys})


def ensemble_uniformity(topology: Topology, n: int = 64, num_challenges: int = 10_000, instances: int = 1000,
                        rng: RngLike = None) -> metrics.UniformityProfile:
    """Block and overall uniformity over ``num_challenges`` samples spread across fresh instances.

    A single instance is biased by its constant-feature weights and by the
    overlap of its members' weight vectors; the balance of the construction
    is a property of the instance distribution.
    """
    root = as_rng_seed(rng)
    per = max(1, num_challenges // instances)
    profiles = []
    for i in range(instances):
        p = OaxPuf.sample(topology, n, 0.0, root.substream("instance", i))
        profiles.append(metrics.measure_block_uniformity(p, per, root.substream("challenges", i)))
    return _mean_profile(profiles)


def uniformity_table(n: int = 64, num_challenges: int = 10_000, rng: RngLike = None,
                     topologies=None, instances: int = 1000) -> list[UniformityRow]:
    root = as_rng_seed(rng)
    rows = []
    for t in topologies or UNIFORMITY_TABLE:
        sub = root.substream("uniformity-row", format_topology(t))
        single = OaxPuf.sample(t, n, 0.0, sub.substream("puf"))
        rows.append(UniformityRow(
            tuple(t), metrics.uniformity_profile(*t),
            ensemble_uniformity(t, n, num_challenges, instances, sub.substream("ensemble")),
            metrics.measure_block_uniformity(single, num_challenges, sub.substream("measure")),
            num_challenges, instances))
    return rows


@dataclass
class InstabilityPoint:
    topology: Topology
    value: metrics.EmpiricalEstimate
    member_values: list[float]

    def as_dict(self) -> dict:
        return {"topology": format_topology(self.topology), "instability": self.value.as_dict(),
                "member_instability": self.member_values}


def instability_point(topology: Topology, n: int = 64, sigma_noise: float = 0.05, repeats: int = 11,
                      num_challenges: int = 100_000, rng: RngLike = None,
                      member_target: float | None = None) -> InstabilityPoint:
    """Share of challenges whose repeated responses disagree, for the composite and each member.

    With ``member_target`` every member's noise is tuned so that its own
    instability is ``member_target``; ``sigma_noise`` is then ignored.
    """
    root = as_rng_seed(rng).substream("instability-point", format_topology(topology))
    p = OaxPuf.sample(topology, n, sigma_noise, root.substream("puf"))
    if member_target is not None:
        p = calibrate_instability(p, member_target, repeats, root.substream("calibrate"))
    value = metrics.measure_instability(p, num_challenges, repeats, root.substream("measure"))
    members = metrics.measure_instability(p, num_challenges // 2, repeats, root.substream("members"), members=True)
    return InstabilityPoint(tuple(topology), value, [m.value for m in members])
