# agent_base.py
"""
Base class for all grasp agents.
Provides the per-grasp lifecycle shared by the expert and learned policies.
"""

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ..core.physics import GripperCommand, GripperObservation, ObjectSpec


class GraspAgent(ABC):
    """Abstract base class for agents that drive the gripper one tick at a time."""

    def __init__(self, name: str, role: str):
        """
        Initialize agent.

        Args:
            name: Agent name (e.g., "Expert")
            role: Agent role description (e.g., "Adaptive force controller")
        """
        self.name = name
        self.role = role
        self.instruction: str = ""
        self.rng: Optional[np.random.Generator] = None
        self.ticks = 0

    def reset(self, instruction: str = "", rng: Optional[np.random.Generator] = None):
        """
        Start a new grasp.

        Args:
            instruction: Task instruction for this grasp
            rng: Stream for any sampling the agent does during the grasp
        """
        self.instruction = instruction
        self.rng = rng
        self.ticks = 0
        self._reset()

    def estimate_object(self, spec: ObjectSpec, rng: np.random.Generator):
        """
        Receive the object the next grasp targets.
        Agents that plan from parameter estimates override this.

        Args:
            spec: Ground-truth object (estimates are drawn from it)
            rng: Estimation stream
        """
        pass

    @abstractmethod
    def _reset(self):
        """Clear agent-specific per-grasp state."""
        pass

    @abstractmethod
    def act(self, observation: Optional[GripperObservation]) -> Optional[GripperCommand]:
        """
        Produce the command for the next tick.

        Args:
            observation: Latest sensed state, or None when the reading was lost

        Returns:
            Command to execute, or None to keep the previous command
        """
        pass

    @property
    def variant(self) -> str:
        """Tag used in reports ("expert", "forceful", "position_only")."""
        return self.name.lower()

    def __repr__(self) -> str:
        return f"{self.name} ({self.role})"
