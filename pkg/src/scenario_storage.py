#!/usr/bin/env python3
"""
Binary scenario file storage ("CAMS" format)

Layout, all integers little-endian, floats 64-bit:

    magic "CAMS" | version u32 | count u32 | count x (length u32 | record)

record:
    label u8 | t_accident i32 (-1 = none) | T u16 | H u16 | W u16 |
    fps u16 | driver_state u8 | hazard_agent i16 (-1 = none) |
    token count u16 | tokens i32[n] | grids u8[T*H*W*3] | maps f64[T*H*W] |
    agent count u16 | agents

agent:
    agent_id u16 | class u8 | role u8 | size f64[2] |
    positions f64[T*2] | velocities f64[T*2]
"""

import logging
import struct
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .exceptions import InputError, ParseError, VersionError
from .scenario_sim import AGENT_CLASSES, DRIVER_STATES, Agent, ScenarioSequence

logger = logging.getLogger(__name__)

MAGIC = b'CAMS'
FORMAT_VERSION = 1
AGENT_ROLES = ('hazard', 'distractor', 'near_miss')

_HEADER = struct.Struct('<4sII')
_RECORD_HEAD = struct.Struct('<BiHHHHBh')
_AGENT_HEAD = struct.Struct('<HBB2d')


class _Reader:
    """Bounds-checked cursor over a byte buffer"""

    def __init__(self, data: bytes, offset: int = 0, end: int = None):
        self.data = data
        self.offset = offset
        self.end = len(data) if end is None else end

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > self.end:
            raise ParseError(f"Unexpected end of data while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, layout: struct.Struct, what: str):
        return layout.unpack(self.take(layout.size, what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count, what), dtype=dtype).copy()


class ScenarioFileStorage:
    """Reads and writes lists of ScenarioSequence in the CAMS format"""

    def encode(self, sequences: Sequence[ScenarioSequence]) -> bytes:
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(sequences))]
        for seq in sequences:
            record = self._encode_record(seq)
            parts.append(struct.pack('<I', len(record)))
            parts.append(record)
        return b''.join(parts)

    def _encode_record(self, seq: ScenarioSequence) -> bytes:
        T, H, W = seq.frames, seq.grid_size[0], seq.grid_size[1]
        parts = [
            _RECORD_HEAD.pack(
                1 if seq.label else 0,
                -1 if seq.t_accident is None else seq.t_accident,
                T, H, W, seq.fps,
                DRIVER_STATES.index(seq.driver_state),
                -1 if seq.hazard_agent is None else seq.hazard_agent,
            ),
            struct.pack('<H', len(seq.text_tokens)),
            np.asarray(seq.text_tokens, dtype='<i4').tobytes(),
            np.ascontiguousarray(seq.grid_levels, dtype=np.uint8).tobytes(),
            np.ascontiguousarray(seq.attention_map, dtype='<f8').tobytes(),
            struct.pack('<H', len(seq.agents)),
        ]
        for agent in seq.agents:
            parts.append(_AGENT_HEAD.pack(agent.agent_id, AGENT_CLASSES.index(agent.agent_class),
                                          AGENT_ROLES.index(agent.role), *agent.size))
            parts.append(np.ascontiguousarray(agent.positions, dtype='<f8').tobytes())
            parts.append(np.ascontiguousarray(agent.velocities, dtype='<f8').tobytes())
        return b''.join(parts)

    def decode(self, data: bytes) -> List[ScenarioSequence]:
        reader = _Reader(data)
        magic, version, count = reader.unpack(_HEADER, 'header')
        if magic != MAGIC:
            raise VersionError(f"Not a scenario file (magic {magic!r})")
        if version != FORMAT_VERSION:
            raise VersionError(f"Unsupported scenario format version {version} (expected {FORMAT_VERSION})")
        sequences = []
        for index in range(count):
            (length,) = reader.unpack(struct.Struct('<I'), f'record {index} length')
            start = reader.offset
            if start + length > len(data):
                raise ParseError(f"Record {index} extends past end of file", start)
            sequences.append(self._decode_record(_Reader(data, start, start + length), index))
            reader.offset = start + length
        if reader.offset != len(data):
            raise ParseError("Trailing bytes after last record", reader.offset)
        return sequences

    def _decode_record(self, reader: _Reader, index: int) -> ScenarioSequence:
        record_start = reader.offset
        label, t_accident, T, H, W, fps, driver, hazard = reader.unpack(_RECORD_HEAD, f'record {index} header')
        if driver >= len(DRIVER_STATES):
            raise ParseError(f"Unknown driver state code {driver}", reader.offset - 3)
        (token_count,) = reader.unpack(struct.Struct('<H'), 'token count')
        tokens = reader.array('<i4', token_count, 'tokens').astype(np.int64)
        grids = reader.array(np.uint8, T * H * W * 3, 'grids').reshape(T, H, W, 3)
        maps = reader.array('<f8', T * H * W, 'attention maps').astype(np.float64).reshape(T, H, W)
        (agent_count,) = reader.unpack(struct.Struct('<H'), 'agent count')
        agents = []
        for _ in range(agent_count):
            offset = reader.offset
            agent_id, cls, role, width, length = reader.unpack(_AGENT_HEAD, 'agent header')
            if cls >= len(AGENT_CLASSES) or role >= len(AGENT_ROLES):
                raise ParseError(f"Unknown agent class/role code {cls}/{role}", offset)
            positions = reader.array('<f8', T * 2, 'agent positions').astype(np.float64).reshape(T, 2)
            velocities = reader.array('<f8', T * 2, 'agent velocities').astype(np.float64).reshape(T, 2)
            agents.append(Agent(agent_id, AGENT_CLASSES[cls], (width, length), positions, velocities,
                                role=AGENT_ROLES[role]))
        if reader.offset != reader.end:
            raise ParseError(f"Record {index} length does not match its contents", reader.offset)
        try:
            return ScenarioSequence(
                grid_levels=grids,
                attention_map=maps,
                text_tokens=tokens,
                agents=agents,
                label=bool(label),
                t_accident=None if t_accident < 0 else int(t_accident),
                fps=fps,
                driver_state=DRIVER_STATES[driver],
                hazard_agent=None if hazard < 0 else int(hazard),
            )
        except InputError as e:
            raise ParseError(f"Record {index} is inconsistent: {e}", record_start) from e

    def save(self, path: Union[str, Path], sequences: Sequence[ScenarioSequence]):
        """
        Write sequences to a scenario file

        Args:
            path: Output file path (parent directories are created)
            sequences: Sequences to store, in order
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encode(sequences))
        logger.info(f"Saved {len(sequences)} sequences to {path}")

    def load(self, path: Union[str, Path]) -> List[ScenarioSequence]:
        """
        Read a scenario file

        Returns:
            List of ScenarioSequence

        Raises:
            ParseError: Malformed or truncated file
            VersionError: Wrong magic or format version
        """
        sequences = self.decode(Path(path).read_bytes())
        logger.info(f"Loaded {len(sequences)} sequences from {path}")
        return sequences


# Global instance
scenario_storage = ScenarioFileStorage()
