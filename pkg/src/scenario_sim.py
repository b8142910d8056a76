#!/usr/bin/env python3
"""
Synthetic Traffic Scenario Simulator

Generates deterministic multi-modal driving sequences in the ego frame:
bird's-eye occupancy grids (the RGB surrogate), driver attention heatmaps,
scenario token ids and ground-truth agent trajectories, with labeled
collision frames for positive sequences.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ScenarioConfig
from .exceptions import ConfigError, InputError
from .scenario_vocabulary import (
    DENSITY_TOKENS, EGO_TOKENS, LIGHT_TOKENS, ROAD_TOKENS, SCENARIO_BIGRAMS,
    WEATHER_TOKENS, encode_words,
)
from .tensor_kernel import Rng

logger = logging.getLogger(__name__)

AGENT_CLASSES = ('pedestrian', 'car', 'motorcycle', 'bus', 'cyclist')
AGENT_SIZES = {
    'pedestrian': (0.6, 0.6),
    'car': (1.8, 4.5),
    'motorcycle': (0.8, 2.1),
    'bus': (2.5, 12.0),
    'cyclist': (0.7, 1.8),
}
VULNERABLE_CLASSES = ('pedestrian', 'cyclist')

# Bird's-eye extent of the rendered grid, ego at the origin facing +z
LATERAL_RANGE = (-16.0, 16.0)
LONGITUDINAL_RANGE = (-8.0, 56.0)

SPAWN_LATERAL_LIMIT = 20.0
SPAWN_LONGITUDINAL_LIMIT = 60.0
COLLISION_TOLERANCE = 1e-9

DRIVER_STATES = ('attentive', 'distracted')
REGIMES = ('mixed', 'benign', 'hazard')

# kind -> (agent class, lateral speed range, closing speed range, accel factor range)
HAZARD_KINDS: Dict[str, Tuple[str, Tuple[float, float], Tuple[float, float], Tuple[float, float]]] = {
    'pedestrian_crossing': ('pedestrian', (1.0, 2.0), (3.0, 7.0), (-0.2, 0.2)),
    'jaywalking': ('pedestrian', (0.8, 1.6), (3.0, 6.0), (-0.2, 0.2)),
    'cut_in': ('car', (1.0, 2.0), (2.0, 5.0), (-0.3, 0.5)),
    'lead_braking': ('car', (0.0, 0.2), (4.0, 9.0), (0.2, 1.0)),
    'red_light': ('car', (4.0, 6.5), (2.0, 4.0), (-0.3, 0.3)),
    'motorcycle_overtaking': ('motorcycle', (1.5, 3.0), (3.0, 6.0), (-0.3, 0.5)),
    'cyclist_swerving': ('cyclist', (1.0, 2.0), (2.0, 4.0), (-0.2, 0.2)),
    'oncoming_bus': ('bus', (0.8, 1.5), (10.0, 14.0), (-0.3, 0.3)),
}

DISTRACTOR_KINDS = ('parallel', 'oncoming', 'sidewalk', 'near_miss', 'stopping_lead')


@dataclass(eq=False)
class Agent:
    """One road user's trajectory in the ego frame"""
    agent_id: int
    agent_class: str
    size: Tuple[float, float]
    positions: np.ndarray  # (T, 2) lateral x, longitudinal z in meters
    velocities: np.ndarray  # (T, 2) m/s
    role: str = 'distractor'

    def __eq__(self, other):
        if not isinstance(other, Agent):
            return NotImplemented
        return (self.agent_id == other.agent_id
                and self.agent_class == other.agent_class
                and tuple(self.size) == tuple(other.size)
                and self.role == other.role
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.velocities, other.velocities))

    def distances(self) -> np.ndarray:
        """Center distance to the ego origin per frame"""
        return np.hypot(self.positions[:, 0], self.positions[:, 1])


@dataclass(eq=False)
class ScenarioSequence:
    """
    One synthetic clip

    grid_levels holds the H x W x 3 occupancy rendering quantized to 1/255
    steps (u8 levels); scene_grid exposes it as float64 in [0, 1].
    """
    grid_levels: np.ndarray  # (T, H, W, 3) uint8
    attention_map: np.ndarray  # (T, H, W) float64, each frame sums to 1
    text_tokens: np.ndarray  # (token_length,) int64
    agents: List[Agent]
    label: bool
    t_accident: Optional[int]
    fps: int = 10
    driver_state: str = 'attentive'
    hazard_agent: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        T = self.grid_levels.shape[0]
        if self.grid_levels.ndim != 4 or self.grid_levels.shape[3] != 3:
            raise InputError(f"scene grid must be (T, H, W, 3), got {self.grid_levels.shape}")
        if self.attention_map.shape != self.grid_levels.shape[:3]:
            raise InputError("attention maps must match the grid frames and extent")
        if np.any(self.attention_map < 0) or np.any(self.attention_map.reshape(T, -1).sum(axis=1) <= 0):
            raise InputError("attention maps must be nonnegative and not all zero")
        if self.label != (self.t_accident is not None and 0 < self.t_accident < T):
            raise InputError(f"label {self.label} inconsistent with t_accident {self.t_accident}")
        if self.driver_state not in DRIVER_STATES:
            raise InputError(f"Unknown driver state {self.driver_state!r}")

    def __eq__(self, other):
        if not isinstance(other, ScenarioSequence):
            return NotImplemented
        return (self.label == other.label
                and self.t_accident == other.t_accident
                and self.fps == other.fps
                and self.driver_state == other.driver_state
                and self.hazard_agent == other.hazard_agent
                and np.array_equal(self.grid_levels, other.grid_levels)
                and np.array_equal(self.attention_map, other.attention_map)
                and np.array_equal(self.text_tokens, other.text_tokens)
                and self.agents == other.agents)

    @property
    def frames(self) -> int:
        return int(self.grid_levels.shape[0])

    @property
    def grid_size(self) -> Tuple[int, int]:
        return int(self.grid_levels.shape[1]), int(self.grid_levels.shape[2])

    @property
    def scene_grid(self) -> np.ndarray:
        return self.grid_levels.astype(np.float64) / 255.0

    def agents_at(self, frame: int) -> List[Tuple[int, str, float, float]]:
        """(agent_id, class, x, z) for every agent at a frame"""
        return [(a.agent_id, a.agent_class, float(a.positions[frame, 0]), float(a.positions[frame, 1]))
                for a in self.agents]


def integrate_kinematics(start: Sequence[float], velocity: Sequence[float], accel: Sequence[float],
                         frames: int, fps: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Constant-acceleration motion sampled at frame times t = k / fps

    Returns:
        (positions, velocities), each (frames, 2)
    """
    t = np.arange(frames, dtype=np.float64)[:, None] / fps
    p0 = np.asarray(start, dtype=np.float64)
    v0 = np.asarray(velocity, dtype=np.float64)
    a = np.asarray(accel, dtype=np.float64)
    return p0 + v0 * t + 0.5 * a * t * t, v0 + a * t


def first_collision_frame(positions: np.ndarray, radius: float = 1.0) -> Optional[int]:
    """First frame whose ego-agent center distance is within the collision radius"""
    hits = np.nonzero(np.hypot(positions[:, 0], positions[:, 1]) <= radius + COLLISION_TOLERANCE)[0]
    return int(hits[0]) if hits.size else None


def label_frames(seq: ScenarioSequence, window_s: float = 3.0) -> np.ndarray:
    """
    Per-frame binary targets

    y_t = 1 iff the sequence is positive and t lies in
    [t_accident - window_s * fps, t_accident] (clamped at 0).
    """
    targets = np.zeros(seq.frames, dtype=np.int64)
    if seq.label and seq.t_accident is not None:
        start = max(0, seq.t_accident - int(round(window_s * seq.fps)))
        targets[start:seq.t_accident + 1] = 1
    return targets


def project_to_grid(x, z, grid: Tuple[int, int]):
    """Continuous (row, col) cell coordinates of ego-frame points"""
    H, W = grid
    col = (np.asarray(x) - LATERAL_RANGE[0]) / (LATERAL_RANGE[1] - LATERAL_RANGE[0]) * W
    row = (LONGITUDINAL_RANGE[1] - np.asarray(z)) / (LONGITUDINAL_RANGE[1] - LONGITUDINAL_RANGE[0]) * H
    return row, col


def _interval_overlap(low: float, high: float, edges: np.ndarray) -> np.ndarray:
    width = edges[1] - edges[0]
    return np.clip(np.minimum(high, edges[1:]) - np.maximum(low, edges[:-1]), 0.0, None) / width


class ScenarioGenerator:
    """Builds scenario sequences from seeded sub-streams"""

    def __init__(self, config: Optional[ScenarioConfig] = None):
        self.config = (config or ScenarioConfig()).validate()
        H = W = self.config.grid_size
        self._col_edges = np.linspace(LATERAL_RANGE[0], LATERAL_RANGE[1], W + 1)
        # rows run from far (top) to near (bottom)
        self._row_edges = np.linspace(LONGITUDINAL_RANGE[1], LONGITUDINAL_RANGE[0], H + 1)
        rows, cols = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, indexing='ij')
        self._cell_rows = rows
        self._cell_cols = cols

    # ------------------------------------------------------------------
    # trajectories
    # ------------------------------------------------------------------

    def _hazard_agent(self, rng: Rng, kind: str) -> Tuple[Agent, int]:
        """Agent whose trajectory meets the ego after a >= 2 s closing precursor"""
        cfg = self.config
        agent_class, lateral, closing, accel_range = HAZARD_KINDS[kind]
        precursor = 2 * cfg.fps
        for _ in range(200):
            t_target = int(rng.integers(precursor + 4, cfg.frames - 1))
            t_c = t_target / cfg.fps
            contact = rng.uniform(-0.4, 0.4, size=2)
            side = 1.0 if rng.random() < 0.5 else -1.0
            if kind == 'oncoming_bus':
                side = 1.0
            v_c = np.array([side * rng.uniform(*lateral), -rng.uniform(*closing)])
            speed = float(np.hypot(*v_c))
            k = rng.uniform(*accel_range)
            k = min(k, 0.8 * speed / t_c)
            accel = k * v_c / speed
            start = contact - v_c * t_c + 0.5 * accel * t_c * t_c
            if abs(start[0]) > SPAWN_LATERAL_LIMIT or not 0.0 <= start[1] <= SPAWN_LONGITUDINAL_LIMIT:
                continue
            # backward Taylor form equals forward integration from start
            v0 = v_c - accel * t_c
            positions, velocities = integrate_kinematics(start, v0, accel, cfg.frames, cfg.fps)
            t_acc = first_collision_frame(positions, cfg.collision_radius)
            if t_acc is None or t_acc < precursor or t_acc >= cfg.frames:
                continue
            dist = np.hypot(positions[:, 0], positions[:, 1])
            if not np.all(np.diff(dist[t_acc - precursor:t_acc + 1]) < 0):
                continue
            positions[t_acc:] = positions[t_acc]
            velocities[t_acc:] = 0.0
            size = AGENT_SIZES[agent_class]
            return Agent(0, agent_class, size, positions, velocities, role='hazard'), t_acc
        raise ConfigError(f"Could not place a {kind} hazard within the clip; check scenario.frames/fps")

    def _distractor(self, rng: Rng, agent_id: int, kind: str, far_only: bool = False) -> Agent:
        cfg = self.config
        for _ in range(200):
            side = 1.0 if rng.random() < 0.5 else -1.0
            accel = (0.0, 0.0)
            if kind == 'parallel':
                agent_class = str(rng.choice(['car', 'motorcycle', 'bus']))
                start = (side * rng.uniform(3.2, 4.0), rng.uniform(5.0, 55.0))
                velocity = (0.0, rng.uniform(-3.0, 3.0))
            elif kind == 'oncoming':
                agent_class = str(rng.choice(['car', 'bus']))
                start = (-rng.uniform(3.0, 5.5), rng.uniform(30.0, 60.0))
                velocity = (0.0, -rng.uniform(8.0, 15.0))
            elif kind == 'sidewalk':
                agent_class = str(rng.choice(['pedestrian', 'cyclist']))
                start = (side * rng.uniform(6.0, 9.0), rng.uniform(10.0, 60.0))
                velocity = (0.0, -rng.uniform(3.0, 7.0))
            elif kind == 'near_miss':
                agent_class = str(rng.choice(['motorcycle', 'cyclist']))
                start = (side * rng.uniform(1.8, 2.6), rng.uniform(15.0, 50.0))
                velocity = (-side * rng.uniform(0.0, 0.05), -rng.uniform(3.0, 8.0))
            elif kind == 'stopping_lead':
                agent_class = 'car'
                z0 = rng.uniform(15.0, 35.0)
                v0 = rng.uniform(3.0, 7.0)
                stop = rng.uniform(3.5, 6.0)
                decel = v0 * v0 / (2.0 * (z0 - stop))
                start = (rng.uniform(-0.3, 0.3), z0)
                velocity = (0.0, -v0)
                accel = (0.0, decel)
            else:
                raise ConfigError(f"Unknown distractor kind {kind!r}")
            if far_only and start[1] < 30.0:
                continue
            positions, velocities = integrate_kinematics(start, velocity, accel, cfg.frames, cfg.fps)
            if kind == 'stopping_lead':
                halted = velocities[:, 1] >= 0.0
                if halted.any():
                    first = int(np.argmax(halted))
                    positions[first:] = positions[first]
                    velocities[first:] = 0.0
            if np.hypot(positions[:, 0], positions[:, 1]).min() <= cfg.collision_radius + 0.5:
                continue
            role = 'near_miss' if kind in ('near_miss', 'stopping_lead') else 'distractor'
            return Agent(agent_id, agent_class, AGENT_SIZES[agent_class], positions, velocities, role=role)
        raise ConfigError(f"Could not place a {kind} distractor without collision")

    # ------------------------------------------------------------------
    # rendering
    # ------------------------------------------------------------------

    def _render_grid(self, rng: Rng, agents: List[Agent], weather: str, light: str) -> np.ndarray:
        cfg = self.config
        H = W = cfg.grid_size
        grid = np.zeros((cfg.frames, H, W, 3), dtype=np.float64)
        cell_w = self._col_edges[1] - self._col_edges[0]
        cell_h = self._row_edges[0] - self._row_edges[1]
        row_edges_up = self._row_edges[::-1]  # ascending z
        for agent in agents:
            channel = 1 if agent.agent_class in VULNERABLE_CLASSES else 0
            w = max(agent.size[0], cell_w)
            l = max(agent.size[1], cell_h)
            for t in range(cfg.frames):
                x, z = agent.positions[t]
                cols = _interval_overlap(x - w / 2, x + w / 2, self._col_edges)
                rows = _interval_overlap(z - l / 2, z + l / 2, row_edges_up)[::-1]
                if not cols.any() or not rows.any():
                    continue
                grid[t, :, :, channel] = np.maximum(grid[t, :, :, channel], np.outer(rows, cols))
        # static road layout: lane lines and road edges
        road = np.zeros((H, W))
        for line_x, intensity in ((-5.25, 0.4), (-1.75, 0.4), (1.75, 0.4), (5.25, 0.4), (-7.0, 0.6), (7.0, 0.6)):
            col = int((line_x - LATERAL_RANGE[0]) / (LATERAL_RANGE[1] - LATERAL_RANGE[0]) * W)
            road[:, min(max(col, 0), W - 1)] = intensity
        if light == 'night':
            road *= 0.5
        grid[:, :, :, 2] = road
        if weather in ('rain', 'snow'):
            speckle = rng.random((cfg.frames, H, W)) < 0.1
            grid[:, :, :, 2] += speckle * rng.uniform(0.0, 0.25, size=(cfg.frames, H, W))
        elif weather == 'fog':
            grid += 0.1
        return np.round(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)

    def _gaussian(self, row: float, col: float, sigma: float) -> Optional[np.ndarray]:
        g = np.exp(-((self._cell_rows - row) ** 2 + (self._cell_cols - col) ** 2) / (2.0 * sigma * sigma))
        total = g.sum()
        if total < 1e-12:
            return None
        return g / total

    def _render_attention(self, rng: Rng, agents: List[Agent], focus: Optional[int], distracted: bool) -> np.ndarray:
        cfg = self.config
        H = W = cfg.grid_size
        maps = np.zeros((cfg.frames, H, W), dtype=np.float64)
        uniform = np.full((H, W), 1.0 / (H * W))
        if distracted:
            angle = rng.uniform(0.0, 2.0 * math.pi)
            magnitude = rng.uniform(6.0, 10.0)
            offset = np.array([magnitude * math.sin(angle), magnitude * math.cos(angle)])
            drift_phase = rng.uniform(0.0, 2.0 * math.pi)
        focus_sigma = 4.0 if distracted else 1.5
        vanishing = (2.0, W / 2.0)
        for t in range(cfg.frames):
            if focus is not None:
                x, z = agents[focus].positions[t]
                row, col = project_to_grid(x, z, (H, W))
            else:
                row, col = vanishing
            if distracted:
                drift = 2.0 * math.sin(drift_phase + 0.15 * t)
                row, col = row + offset[0] + drift, col + offset[1] - drift
            sigma = focus_sigma if focus is not None else max(focus_sigma, 6.0)
            main = self._gaussian(row, col, sigma)
            others = []
            for index, agent in enumerate(agents):
                if index == focus:
                    continue
                r, c = project_to_grid(agent.positions[t, 0], agent.positions[t, 1], (H, W))
                g = self._gaussian(r, c, 2.0)
                if g is not None:
                    others.append(g)
            frame = 0.1 * uniform
            if main is not None:
                frame = frame + 0.75 * main
            if others:
                frame = frame + 0.15 * np.mean(others, axis=0)
            maps[t] = frame / frame.sum()
        return maps

    # ------------------------------------------------------------------
    # text
    # ------------------------------------------------------------------

    def _tokens(self, rng: Rng, agents: List[Agent], hazard_kind: Optional[str], regime: str) -> Tuple[np.ndarray, str, str]:
        cfg = self.config
        if regime == 'benign':
            weather, light, road, density = 'clear', 'day', 'highway', 'light-traffic'
            ego = 'ego-cruising'
        elif regime == 'hazard':
            weather = str(rng.choice(['rain', 'fog', 'snow']))
            light = str(rng.choice(['night', 'dusk']))
            road = str(rng.choice(['intersection', 'urban', 'narrow']))
            density = str(rng.choice(['dense-traffic', 'congested']))
            ego = 'ego-slowing'
        else:
            weather = str(rng.choice(WEATHER_TOKENS))
            light = str(rng.choice(LIGHT_TOKENS))
            road = str(rng.choice(ROAD_TOKENS))
            density = DENSITY_TOKENS[min(len(agents) - 1, len(DENSITY_TOKENS) - 1)] if agents else DENSITY_TOKENS[0]
            ego = str(rng.choice(EGO_TOKENS))
        words = [weather, light, road, density, ego]
        if weather in ('rain', 'snow'):
            words.append('wet')
        classes = sorted({agent.agent_class for agent in agents}, key=AGENT_CLASSES.index)
        words.append('single' if len(agents) <= 1 else 'several')
        words.extend(classes)
        if hazard_kind is not None:
            emit = regime == 'hazard' or rng.random() < cfg.hazard_bigram_positive
            if emit:
                words.extend(SCENARIO_BIGRAMS[hazard_kind])
        elif regime != 'benign' and rng.random() < cfg.hazard_bigram_negative:
            decoy = str(rng.choice(sorted(SCENARIO_BIGRAMS)))
            words.extend(SCENARIO_BIGRAMS[decoy])
        tokens = np.asarray(encode_words(words, cfg.token_length), dtype=np.int64)
        return tokens, weather, light

    # ------------------------------------------------------------------
    # assembly
    # ------------------------------------------------------------------

    def build(self, rng: Rng, positive: bool, regime: str = 'mixed') -> ScenarioSequence:
        """
        Build one sequence from a per-sequence generator

        Args:
            rng: Per-sequence generator, split into geometry/attention/text/render streams
            positive: Whether the clip contains a collision
            regime: 'mixed', 'benign' (low complexity) or 'hazard' (high complexity)

        Returns:
            ScenarioSequence
        """
        if regime not in REGIMES:
            raise ConfigError(f"Unknown regime {regime!r}")
        cfg = self.config
        geometry, attention, text, render = rng.spawn(4)

        agents: List[Agent] = []
        t_accident = None
        hazard_kind = None
        if positive:
            hazard_kind = str(geometry.choice(sorted(HAZARD_KINDS)))
            hazard, t_accident = self._hazard_agent(geometry, hazard_kind)
            agents.append(hazard)

        if regime == 'benign':
            count = int(geometry.integers(0, 2))
            kinds = [str(geometry.choice(['oncoming', 'sidewalk'])) for _ in range(count)]
        elif regime == 'hazard':
            count = int(geometry.integers(4, 7))
            kinds = [str(geometry.choice(['parallel', 'oncoming', 'sidewalk', 'near_miss'])) for _ in range(count)]
        else:
            count = int(geometry.integers(cfg.min_distractors, cfg.max_distractors + 1))
            pool = ['parallel', 'oncoming', 'sidewalk', 'near_miss']
            kinds = [str(geometry.choice(pool)) for _ in range(count)]
            if not positive and count and geometry.random() < 0.5:
                kinds[0] = 'stopping_lead'
        for kind in kinds:
            agents.append(self._distractor(geometry, len(agents), kind, far_only=(regime == 'benign')))

        distracted = regime == 'mixed' and attention.random() < cfg.distraction_rate
        if positive:
            focus = 0
        elif agents:
            closest = [agent.distances().min() for agent in agents]
            focus = int(np.argmin(closest))
        else:
            focus = None
        maps = self._render_attention(attention, agents, focus, distracted)
        tokens, weather, light = self._tokens(text, agents, hazard_kind, regime)
        grid = self._render_grid(render, agents, weather, light)
        return ScenarioSequence(
            grid_levels=grid,
            attention_map=maps,
            text_tokens=tokens,
            agents=agents,
            label=positive,
            t_accident=t_accident,
            fps=cfg.fps,
            driver_state='distracted' if distracted else 'attentive',
            hazard_agent=0 if positive else None,
        )


def generate(seed: int, count: int, positive_fraction: float,
             config: Optional[ScenarioConfig] = None) -> List[ScenarioSequence]:
    """
    Generate a seeded batch of scenario sequences

    Args:
        seed: 64-bit seed; generation is a pure function of (seed, config)
        count: Number of sequences
        positive_fraction: Fraction of sequences with a collision
        config: Scenario settings

    Returns:
        List of ScenarioSequence in index order
    """
    if count <= 0:
        raise ConfigError(f"count must be positive, got {count}")
    if not 0.0 <= positive_fraction <= 1.0:
        raise ConfigError(f"positive_fraction must be in [0, 1], got {positive_fraction}")
    generator = ScenarioGenerator(config)
    label_rng, *sequence_rngs = Rng(seed).spawn(count + 1)
    positives = set(int(i) for i in label_rng.permutation(count)[:int(round(count * positive_fraction))])
    sequences = [generator.build(rng, index in positives) for index, rng in enumerate(sequence_rngs)]
    logger.info(f"Generated {count} sequences ({len(positives)} positive) from seed {seed}")
    return sequences


def generate_stress_set(seed: int, count: int, config: Optional[ScenarioConfig] = None) -> List[ScenarioSequence]:
    """
    Two-regime stress set: even indices are low-complexity benign clips,
    odd indices are high-complexity hazard clips.
    """
    if count <= 0:
        raise ConfigError(f"count must be positive, got {count}")
    generator = ScenarioGenerator(config)
    _, *sequence_rngs = Rng(seed).spawn(count + 1)
    sequences = []
    for index, rng in enumerate(sequence_rngs):
        hazard = index % 2 == 1
        sequences.append(generator.build(rng, hazard, regime='hazard' if hazard else 'benign'))
    logger.info(f"Generated stress set of {count} sequences from seed {seed}")
    return sequences


def generate_benchmark(seed: int, train_count: int = 300, test_count: int = 100, positive_fraction: float = 0.4,
                       config: Optional[ScenarioConfig] = None) -> Tuple[List[ScenarioSequence], List[ScenarioSequence]]:
    """Reference train/test split: one seeded batch, the first train_count sequences train"""
    if train_count <= 0 or test_count <= 0:
        raise ConfigError("train_count and test_count must be positive")
    sequences = generate(seed, train_count + test_count, positive_fraction, config)
    return sequences[:train_count], sequences[train_count:]


def sliding_windows(seq: ScenarioSequence, window_s: float, stride_s: float = 1.0) -> List[ScenarioSequence]:
    """
    Cut a clip into fixed-length windows

    Windows that start after a collision are dropped; the accident frame is
    re-indexed into each window that contains it strictly after its first
    frame, every other window is a negative.
    """
    length = int(round(window_s * seq.fps))
    stride = max(1, int(round(stride_s * seq.fps)))
    if length < 2:
        raise InputError("window must span at least two frames")
    if length >= seq.frames:
        return [seq]
    windows = []
    for start in range(0, seq.frames - length + 1, stride):
        if seq.label and start >= seq.t_accident:
            break
        end = start + length
        t_acc = None
        if seq.label and start < seq.t_accident < end:
            t_acc = seq.t_accident - start
        agents = [replace(agent, positions=agent.positions[start:end].copy(),
                          velocities=agent.velocities[start:end].copy()) for agent in seq.agents]
        windows.append(ScenarioSequence(
            grid_levels=seq.grid_levels[start:end].copy(),
            attention_map=seq.attention_map[start:end].copy(),
            text_tokens=seq.text_tokens.copy(),
            agents=agents,
            label=t_acc is not None,
            t_accident=t_acc,
            fps=seq.fps,
            driver_state=seq.driver_state,
            hazard_agent=seq.hazard_agent if t_acc is not None else None,
        ))
    return windows


def summarize(sequences: Sequence[ScenarioSequence]) -> Dict[str, float]:
    """Counts used in logs and manifests"""
    positives = sum(1 for seq in sequences if seq.label)
    return {
        'count': len(sequences),
        'positives': positives,
        'negatives': len(sequences) - positives,
        'distracted': sum(1 for seq in sequences if seq.driver_state == 'distracted'),
        'mean_agents': float(np.mean([len(seq.agents) for seq in sequences])) if sequences else 0.0,
    }
