from __future__ import annotations

from typing import Literal, Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from cfmpc.contact import ContactFeedback
from cfmpc.sim.plant import PlantState, TrueContact


class OracleNoise(BaseModel):
    """RMS of the 3-D location and force errors, split by single- and multi-contact estimation."""

    model_config = ConfigDict(frozen=True)

    enabled: bool = True
    single_position_m: float = Field(default=0.0016, ge=0.0)
    single_force_n: float = Field(default=0.01, ge=0.0)
    multi_position_m: float = Field(default=0.0108, ge=0.0)
    multi_force_n: float = Field(default=2.0, ge=0.0)


class OracleSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["ground_truth", "noiseless"] = "ground_truth"
    noise: OracleNoise = Field(default_factory=OracleNoise)
    single_hz: float = Field(default=2200.0, gt=0.0)
    multi_hz: float = Field(default=600.0, gt=0.0)


@runtime_checkable
class ContactOracle(Protocol):
    """Stand-in for a proprioceptive contact estimator."""

    def poll(self, plant: PlantState) -> list[ContactFeedback] | None:
        """Feedback if an estimate is due at plant.t, else None."""
        ...

    def reset(self) -> None:
        ...


def strongest_per_link(contacts: tuple[TrueContact, ...]) -> list[TrueContact]:
    best: dict[int, TrueContact] = {}
    for contact in contacts:
        kept = best.get(contact.link)
        if kept is None or contact.magnitude > kept.magnitude:
            best[contact.link] = contact
    return [best[link] for link in sorted(best)]


def oracle_tick(
    plant: PlantState, noise: OracleNoise | None = None, rng: np.random.Generator | None = None
) -> list[ContactFeedback]:
    """One report per link in true contact (the strongest one), with optional isotropic noise."""
    reported = strongest_per_link(plant.contacts)
    if noise is None or not noise.enabled or not reported:
        return [ContactFeedback(plant.t, c.link, c.position.copy(), c.force.copy()) for c in reported]
    rng = rng or np.random.default_rng()
    if len(reported) == 1:
        sigma_p, sigma_f = noise.single_position_m, noise.single_force_n
    else:
        sigma_p, sigma_f = noise.multi_position_m, noise.multi_force_n
    # per-axis deviation of an isotropic 3-D error with the given RMS
    sigma_p, sigma_f = sigma_p / np.sqrt(3.0), sigma_f / np.sqrt(3.0)
    return [
        ContactFeedback(
            timestamp=plant.t,
            link=c.link,
            position=c.position + rng.normal(0.0, sigma_p, 3),
            force=c.force + rng.normal(0.0, sigma_f, 3),
        )
        for c in reported
    ]


class GroundTruthOracle:
    """Reads the plant's true contacts at the estimator's update rate (slower with several contacts)."""

    def __init__(self, settings: OracleSettings | None = None, seed: int = 0):
        self.settings = settings or OracleSettings()
        self.seed = seed
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self.seed)
        self._next_t: float | None = None

    def _noise(self) -> OracleNoise | None:
        return self.settings.noise

    def poll(self, plant: PlantState) -> list[ContactFeedback] | None:
        # small slack so float accumulation never skips a due tick
        if self._next_t is not None and plant.t < self._next_t - 1e-9:
            return None
        feedback = oracle_tick(plant, self._noise(), self._rng)
        rate = self.settings.multi_hz if len(feedback) > 1 else self.settings.single_hz
        self._next_t = plant.t + 1.0 / rate
        return feedback


class NoiselessOracle(GroundTruthOracle):
    def _noise(self) -> OracleNoise | None:
        return None


oracles_config: dict[str, type[ContactOracle]] = {
    "ground_truth": GroundTruthOracle,
    "noiseless": NoiselessOracle,
}


def make_oracle(settings: OracleSettings, seed: int = 0) -> ContactOracle:
    return oracles_config[settings.kind](settings, seed)
