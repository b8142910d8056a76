#!/usr/bin/env python3
"""
Geo-context alerts

Turns agent geometry and risk state into spatially grounded alert text,
either ego-relative ("Pedestrian 2.1m in left blind spot") or compass-based.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InputError
from .risk_head import RiskTrace
from .scenario_sim import ScenarioSequence, project_to_grid

logger = logging.getLogger(__name__)

# (upper bound, sector); a bearing belongs to the first sector whose bound it does not exceed
SECTOR_BOUNDS: Tuple[Tuple[float, str], ...] = (
    (-150.0, 'behind'),
    (-105.0, 'left blind spot'),
    (-75.0, 'left'),
    (-15.0, 'front-left'),
    (15.0, 'ahead'),
    (75.0, 'front-right'),
    (105.0, 'right'),
    (150.0, 'right blind spot'),
    (180.0, 'behind'),
)

COMPASS_WINDS = ('north', 'northeast', 'east', 'southeast', 'south', 'southwest', 'west', 'northwest')

SUGGESTIONS = {
    'ahead': 'brake and keep distance',
    'front-left': 'slow down and watch the left lane',
    'front-right': 'slow down and watch the right lane',
    'left': 'hold your lane',
    'right': 'hold your lane',
    'left blind spot': 'check left mirror before changing lanes',
    'right blind spot': 'check right mirror before changing lanes',
    'behind': 'avoid sudden braking',
}


@dataclass
class SpatialReference:
    distance_m: float
    bearing_deg: float
    sector: str


@dataclass
class Alert:
    frame: int
    agent_id: int
    agent_class: str
    spatial: SpatialReference
    p: float
    tau: float
    text: str

    def to_record(self) -> Dict:
        """JSON-lines record: frame, agent_id, class, distance_m, bearing_deg, sector, p, tau, text"""
        return {
            'frame': self.frame,
            'agent_id': self.agent_id,
            'class': self.agent_class,
            'distance_m': self.spatial.distance_m,
            'bearing_deg': self.spatial.bearing_deg,
            'sector': self.spatial.sector,
            'p': self.p,
            'tau': self.tau,
            'text': self.text,
        }


def sector_for(bearing: float) -> str:
    """Sector bin containing a bearing in (-180, 180]"""
    if not -180.0 < bearing <= 180.0:
        raise InputError(f"Bearing {bearing} outside (-180, 180]")
    # ahead is closed at both ends
    if -15.0 <= bearing <= 15.0:
        return 'ahead'
    for bound, sector in SECTOR_BOUNDS:
        if bearing <= bound:
            return sector
    return 'behind'


def locate(x: float, z: float) -> SpatialReference:
    """
    Ego-relative reference of a point

    Args:
        x: Lateral offset in meters (positive right)
        z: Longitudinal offset in meters (positive ahead)

    Returns:
        SpatialReference with distance rounded to 0.1 m and bearing atan2(x, z) in degrees
    """
    if not (math.isfinite(x) and math.isfinite(z)):
        raise InputError("Position must be finite")
    if x == 0.0 and z == 0.0:
        raise InputError("Position coincides with the ego origin")
    bearing = math.degrees(math.atan2(x, z))
    if bearing == -180.0:
        bearing = 180.0
    return SpatialReference(round(math.hypot(x, z), 1), bearing, sector_for(bearing))


def compass_direction(bearing: float, heading: float = 0.0) -> str:
    """8-wind compass word for an ego bearing under a vehicle heading (0 = north)"""
    absolute = (bearing + heading) % 360.0
    return COMPASS_WINDS[int(math.floor((absolute + 22.5) / 45.0)) % 8]


def render_alert(agent_class: str, spatial: SpatialReference, p: Optional[float] = None,
                 tau: Optional[float] = None, mode: str = 'ego', heading: float = 0.0,
                 triggered: bool = True, suggest: bool = False) -> Optional[str]:
    """
    Render alert text

    Args:
        agent_class: Agent class name
        spatial: Output of locate()
        p: Risk probability for the frame
        tau: Adaptive threshold for the frame
        mode: 'ego' (sector words) or 'compass' (8-wind words under heading)
        heading: Vehicle heading in degrees for compass mode
        triggered: Only emit when p > tau; False renders a description regardless
        suggest: Append an action clause for the sector

    Returns:
        Alert text, or None when triggered mode is requested and p <= tau
    """
    if mode not in ('ego', 'compass'):
        raise InputError(f"Unknown alert mode {mode!r}")
    above = p is not None and tau is not None and p > tau
    if triggered and not above:
        return None
    name = agent_class.capitalize()
    if mode == 'compass':
        text = f"{name} {spatial.distance_m:.1f}m to the {compass_direction(spatial.bearing_deg, heading)}"
    else:
        text = f"{name} {spatial.distance_m:.1f}m in {spatial.sector}"
    if above:
        text += f" — risk {p:.2f} above threshold {tau:.2f}"
    if suggest:
        text += f"; {SUGGESTIONS[spatial.sector]}"
    return text


def link_risk_peak(risk_map: np.ndarray, agents: Sequence[Tuple[int, float, float]]) -> int:
    """
    Agent nearest (in grid cells) to the risk-map argmax

    Args:
        risk_map: (h, w) risk map for one frame
        agents: (agent_id, x, z) per agent

    Returns:
        agent_id; ties go to the smaller id
    """
    if not agents:
        raise InputError("link_risk_peak needs at least one agent")
    risk_map = np.asarray(risk_map)
    h, w = risk_map.shape
    flat = int(np.argmax(risk_map))
    peak_row, peak_col = flat // w, flat % w
    best: Optional[Tuple[float, int]] = None
    for agent_id, x, z in agents:
        row, col = project_to_grid(x, z, (h, w))
        cell_row = min(max(int(math.floor(row)), 0), h - 1)
        cell_col = min(max(int(math.floor(col)), 0), w - 1)
        distance = math.hypot(cell_row - peak_row, cell_col - peak_col)
        if best is None or (distance, agent_id) < best:
            best = (distance, agent_id)
    return best[1]


def alert_stream(seq: ScenarioSequence, trace: RiskTrace, mode: str = 'ego', heading: float = 0.0,
                 describe_all: bool = False, suggest: bool = False) -> List[Alert]:
    """
    Alerts for every triggered frame of a sequence

    The alerted agent is the one linked to the frame's risk peak. With
    describe_all every frame yields a description, triggered or not.
    """
    if trace.frames != seq.frames:
        raise InputError(f"Trace has {trace.frames} frames, sequence has {seq.frames}")
    alerts = []
    for frame in range(seq.frames):
        p, tau = float(trace.p[frame]), float(trace.tau[frame])
        if not describe_all and not p > tau:
            continue
        candidates = [(agent.agent_id, float(agent.positions[frame, 0]), float(agent.positions[frame, 1]))
                      for agent in seq.agents
                      if not (agent.positions[frame, 0] == 0.0 and agent.positions[frame, 1] == 0.0)]
        if not candidates:
            continue
        agent_id = link_risk_peak(trace.risk_maps[frame], candidates)
        agent = next(a for a in seq.agents if a.agent_id == agent_id)
        spatial = locate(float(agent.positions[frame, 0]), float(agent.positions[frame, 1]))
        text = render_alert(agent.agent_class, spatial, p, tau, mode=mode, heading=heading,
                            triggered=not describe_all, suggest=suggest)
        alerts.append(Alert(frame, agent_id, agent.agent_class, spatial, p, tau, text))
    logger.info(f"Rendered {len(alerts)} alerts over {seq.frames} frames")
    return alerts
