from typing import Dict, Optional

import numpy as np

from .errors import DomainError


class QTable:
    """Dense state x action value map; immutable after construction"""

    def __init__(self, values, q_id: str = "q"):
        array = np.array(values, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] == 0 or array.shape[1] == 0:
            raise DomainError(f"QTable values must be a non-empty 2-D matrix, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise DomainError(f"QTable {q_id} has non-finite entries")

        array.flags.writeable = False
        self.values = array
        self.id = str(q_id)

    @property
    def state_count(self) -> int:
        return self.values.shape[0]

    @property
    def action_count(self) -> int:
        return self.values.shape[1]

    def check_state(self, state: int) -> int:
        if not 0 <= int(state) < self.state_count:
            raise DomainError(
                f"State {state} out of range for QTable {self.id} with {self.state_count} states"
            )
        return int(state)

    def check_action(self, action: int) -> int:
        if not 0 <= int(action) < self.action_count:
            raise DomainError(
                f"Action {action} out of range for QTable {self.id} with {self.action_count} actions"
            )
        return int(action)

    def greedy_actions(self) -> np.ndarray:
        # np.argmax returns the first maximal index, i.e. lowest action wins ties
        return np.argmax(self.values, axis=1)

    def greedy_values(self) -> np.ndarray:
        return self.values.max(axis=1)

    def transformed(self, fn, q_id: Optional[str] = None) -> "QTable":
        """Apply fn elementwise and return a new table"""
        return QTable(fn(self.values), q_id or self.id)

    @classmethod
    def from_dict(cls, data: Dict) -> "QTable":
        try:
            return cls(data["values"], data.get("id", "q"))
        except KeyError as e:
            raise DomainError(f"QTable record missing field {e}")

    def to_dict(self) -> Dict:
        return {"id": self.id, "values": self.values.tolist()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, QTable):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"QTable(id={self.id!r}, shape={self.values.shape})"


def argmax_action(q: QTable, state: int) -> int:
    """Greedy action at state, ties broken toward the lowest action index"""
    s = q.check_state(state)
    return int(np.argmax(q.values[s]))
