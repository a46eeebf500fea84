"""Score-to-action state machine.

Each stock's trader is a three-state machine (-1 short, 0 flat, +1 long)
driven by the normalized residual score g:

    flat  & g < -g_ol  -> open long
    flat  & g > +g_os  -> open short
    long  & g > -g_cl  -> close long
    short & g < +g_cs  -> close short

all inequalities strict; one decision per stock per day, and a position is
always closed before the opposite side can open (on a later day).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

from .errors import ContractError

logger = logging.getLogger(__name__)

FLAT, LONG, SHORT = 0, 1, -1


class Action(enum.Enum):
    OPEN_LONG = "OpenLong"
    OPEN_SHORT = "OpenShort"
    CLOSE_LONG = "CloseLong"
    CLOSE_SHORT = "CloseShort"
    HOLD = "Hold"


@dataclass(frozen=True)
class Thresholds:
    g_ol: float
    g_os: float
    g_cl: float
    g_cs: float

    def __post_init__(self):
        if self.g_ol <= 0 or self.g_os <= 0:
            raise ValueError("opening cut-offs must be positive")


# Classic reference cut-offs: 1.25 to open either side, 0.5/0.75 to close.
CLASSIC_THRESHOLDS = Thresholds(1.25, 1.25, 0.5, 0.75)

# Grid-search optima per provider; symmetric open/close pairs.
DEFAULT_THRESHOLDS = {
    "pca": Thresholds(1.10, 1.10, -0.50, -0.50),
    "lstm": Thresholds(1.10, 1.10, -0.15, -0.15),
    "existing_etf": Thresholds(2.10, 2.10, 0.75, 0.75),
    "sector_etf": Thresholds(1.95, 1.95, 0.40, 0.40),
}


def decide(g: float, state: int, th: Thresholds) -> Action:
    """One day's action for one stock given its score and position state."""
    if not math.isfinite(g):
        logger.warning("non-finite score %r treated as Hold", g)
        return Action.HOLD
    if state == FLAT:
        if g < -th.g_ol:
            return Action.OPEN_LONG
        if g > th.g_os:
            return Action.OPEN_SHORT
    elif state == LONG:
        if g > -th.g_cl:
            return Action.CLOSE_LONG
    elif state == SHORT:
        if g < th.g_cs:
            return Action.CLOSE_SHORT
    else:
        raise ContractError(f"invalid position state {state}")
    return Action.HOLD


def apply(action: Action, state: int) -> int:
    """Advance the position state; illegal transitions are engine bugs."""
    if action is Action.HOLD:
        if state not in (FLAT, LONG, SHORT):
            raise ContractError(f"invalid position state {state}")
        return state
    if action is Action.OPEN_LONG and state == FLAT:
        return LONG
    if action is Action.OPEN_SHORT and state == FLAT:
        return SHORT
    if action is Action.CLOSE_LONG and state == LONG:
        return FLAT
    if action is Action.CLOSE_SHORT and state == SHORT:
        return FLAT
    raise ContractError(f"illegal transition: {action.value} from state {state}")
