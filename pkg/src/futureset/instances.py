"""Shared action-instance records used across data, model, and metrics."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UsageError


@dataclass(frozen=True)
class ActionInstance:
    """One labeled action span: class index, start frame, end frame.

    Frames are integer indices starting at 1; the span covers ts..te
    inclusive, so a one-frame action has ts == te.
    """

    c: int
    ts: float
    te: float

    def __post_init__(self):
        if self.ts > self.te:
            raise UsageError(f"instance start {self.ts} exceeds end {self.te}")
        if self.c < 0:
            raise UsageError(f"negative class index {self.c}")

    @property
    def duration(self) -> float:
        return self.te - self.ts


@dataclass(frozen=True)
class ScoredInstance:
    """A predicted action span with its class probability."""

    c: int
    ts: float
    te: float
    score: float

    def __post_init__(self):
        if self.ts > self.te:
            raise UsageError(f"instance start {self.ts} exceeds end {self.te}")


def clip_to_window(instances, t_obs: float, t_ant: float) -> list[ActionInstance]:
    """Keep the parts of ``instances`` that fall inside (t_obs, t_obs+t_ant].

    Integer-frame semantics: a span is trimmed to start no earlier than frame
    t_obs+1 and end no later than t_obs+t_ant; spans left empty are dropped.
    """
    out = []
    for inst in instances:
        ts = max(inst.ts, t_obs + 1)
        te = min(inst.te, t_obs + t_ant)
        if ts <= te:
            out.append(ActionInstance(inst.c, ts, te))
    return out
