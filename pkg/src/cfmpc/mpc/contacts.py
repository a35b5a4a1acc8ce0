from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from cfmpc.contact import (
    FORCE_THRESHOLD_N,
    ContactFeedback,
    ContactParams,
    compute_theta,
    contact_deformation,
    refresh_theta,
)
from cfmpc.dynamics import RobotModel
from cfmpc.errors import DegenerateFrameError

logger = logging.getLogger(__name__)


class ContactPolicy(BaseModel):
    """How feedback reports turn into modelled contacts."""

    model_config = ConfigDict(frozen=True)

    k_env_n_per_m: float = Field(default=3500.0, gt=0.0, description="controller-side environment stiffness")
    force_threshold_n: float = Field(default=FORCE_THRESHOLD_N, gt=0.0)
    jump_m: float = Field(default=0.05, gt=0.0, description="a report this far from the tracked point is a new contact")
    silence_s: float = Field(default=0.05, gt=0.0)
    separation_s: float = Field(default=0.05, gt=0.0)
    refresh: Literal["every_tick", "onset"] = "every_tick"


@dataclass(frozen=True, eq=False)
class TrackedContact:
    params: ContactParams
    position: np.ndarray  # last reported location
    last_seen: float
    separated_since: float | None = None

    @property
    def link(self) -> int:
        return self.params.link


def _latest_per_link(feedback: Sequence[ContactFeedback], threshold: float) -> dict[int, ContactFeedback]:
    by_link: dict[int, ContactFeedback] = {}
    for report in feedback:
        if report.magnitude <= threshold:
            logger.debug(f"skipping report on link {report.link}: {report.magnitude:.3g} N is below {threshold} N")
            continue
        kept = by_link.get(report.link)
        if kept is not None:
            logger.warning(f"two contacts reported on link {report.link}; keeping the larger force")
            if kept.magnitude >= report.magnitude:
                continue
        by_link[report.link] = report
    return by_link


def reconcile_contacts(
    tracked: Sequence[TrackedContact],
    feedback: Sequence[ContactFeedback],
    model: RobotModel,
    q: np.ndarray,
    t: float,
    policy: ContactPolicy,
) -> tuple[tuple[TrackedContact, ...], bool]:
    """Update the modelled contact set from one feedback snapshot; the flag is set when the set changed."""
    reports = _latest_per_link(feedback, policy.force_threshold_n)
    k_env = policy.k_env_n_per_m
    result: list[TrackedContact] = []
    rebuild = False
    for contact in tracked:
        report = reports.pop(contact.link, None)
        if report is not None and np.linalg.norm(report.position - contact.position) > policy.jump_m:
            # the estimate moved too far for the same body point: treat it as a fresh contact
            reports[contact.link] = report
            rebuild = True
            logger.info(f"🔁 contact on link {contact.link} jumped; re-attaching")
            continue
        if report is not None:
            params = contact.params
            if policy.refresh == "every_tick":
                try:
                    params = refresh_theta(params, report, model, q, k_env, policy.force_threshold_n)
                except DegenerateFrameError as e:
                    logger.warning(f"keeping previous contact model on link {contact.link}: {e}")
            result.append(
                replace(contact, params=params, position=report.position, last_seen=report.timestamp, separated_since=None)
            )
            continue
        if t - contact.last_seen > policy.silence_s:
            logger.info(f"➖ contact on link {contact.link} removed after {t - contact.last_seen:.3f}s of silence")
            rebuild = True
            continue
        separated_since = contact.separated_since
        if contact_deformation(contact.params, model, q) < 0.0:
            separated_since = t if separated_since is None else separated_since
            if t - separated_since > policy.separation_s:
                logger.info(f"➖ contact on link {contact.link} removed after separating")
                rebuild = True
                continue
        else:
            separated_since = None
        result.append(replace(contact, separated_since=separated_since))

    for link in sorted(reports):
        report = reports[link]
        try:
            params = compute_theta(report, model, q, k_env, policy.force_threshold_n)
        except DegenerateFrameError as e:
            logger.warning(f"skipping contact report on link {link}: {e}")
            continue
        result.append(TrackedContact(params=params, position=report.position, last_seen=report.timestamp))
        rebuild = True
        logger.info(f"➕ contact on link {link}: {report.magnitude:.2f} N")
    result.sort(key=lambda c: c.link)
    return tuple(result), rebuild
