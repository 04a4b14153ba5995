"""High-level actions shared by the planner, the policy and the harness."""
from __future__ import annotations

import enum


class Action(enum.IntEnum):
    TAKE_WAY = 0
    GIVE_WAY = 1
    FOLLOW_1 = 2
    FOLLOW_2 = 3
    FOLLOW_3 = 4
    FOLLOW_4 = 5

    @property
    def follow_slot(self) -> int | None:
        """Observation slot (0-based) followed by this action, if any."""
        return int(self) - 2 if self >= Action.FOLLOW_1 else None

    @classmethod
    def follow(cls, slot: int) -> "Action":
        return cls(slot + 2)


N_ACTIONS = len(Action)
