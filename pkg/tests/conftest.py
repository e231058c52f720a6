import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from ponsim.scenario import OnOffTuning, ScenarioConfig
from ponsim.sched import PriorityPolicy, SchedKind, SchedulerConfig
from ponsim.traffic import CbrSpec, FlWorkloadSpec
from ponsim.twdm import WavelengthPolicy


def tiny_config(**overrides) -> ScenarioConfig:
    """A 4-ONU scenario small enough for sub-second unit runs."""
    defaults = dict(
        name="tiny",
        n_onus=4,
        n_wavelengths=2,
        line_rate_bps=2.5e9,
        duration_s=0.4,
        warmup_s=0.1,
        replications=1,
        master_seed=11,
        loads=(0.8,),
        scheduler=SchedulerConfig(
            kind=SchedKind.IPACT_LIMITED,
            wavelength_policy=WavelengthPolicy.FF,
            guard_ns=6240,
        ),
        fl=FlWorkloadSpec(clients=0),
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


def desk_config(**overrides) -> ScenarioConfig:
    """The scaled-down evaluation scenario: 8 ONUs on 2 x 2.5 Gb/s with a
    2.64 MB FL round payload (guard scaled with the line rate so the
    overhead ratio matches the full-size system)."""
    defaults = dict(
        name="desk",
        n_onus=8,
        n_wavelengths=2,
        line_rate_bps=2.5e9,
        duration_s=20.0,
        warmup_s=2.0,
        replications=5,
        master_seed=101,
        loads=(0.8,),
        scheduler=SchedulerConfig(
            kind=SchedKind.DWBA_FL,
            priority_policy=PriorityPolicy.DC_FIRST,
            wavelength_policy=WavelengthPolicy.FF,
            guard_ns=6240,
        ),
        fl=FlWorkloadSpec(payload_bytes_per_round=2_640_000, clients=8),
        sync_sweep_s=tuple(round(0.8 + 0.02 * i, 2) for i in range(121)),
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)
