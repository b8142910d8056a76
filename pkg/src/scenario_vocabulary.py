"""
Fixed 64-token vocabulary for scenario descriptions

Token ids are positions in VOCABULARY; id 0 is padding. The table is part of
the scenario file contract, so entries are only ever appended, never moved.
"""
from typing import Dict, List, Sequence, Tuple

from .exceptions import InputError

PAD_ID = 0

VOCABULARY: Tuple[str, ...] = (
    '<pad>',
    # agent classes (1-5)
    'pedestrian', 'car', 'motorcycle', 'bus', 'cyclist',
    # actions and hazard words (6-21)
    'crossing', 'cutting-in', 'braking', 'running', 'red-light', 'overtaking',
    'swerving', 'oncoming', 'merging', 'turning', 'reversing', 'jaywalking',
    'door-opening', 'drifting', 'tailgating', 'stalled',
    # weather and light (22-29)
    'clear', 'rain', 'fog', 'snow', 'wet', 'day', 'night', 'dusk',
    # road types (30-39)
    'urban', 'highway', 'rural', 'intersection', 'roundabout', 'two-lane',
    'narrow', 'crosswalk', 'bridge', 'tunnel',
    # traffic density (40-43)
    'light-traffic', 'moderate-traffic', 'dense-traffic', 'congested',
    # ego state (44-47)
    'ego-cruising', 'ego-slowing', 'ego-accelerating', 'ego-stationary',
    # scene furniture (48-55)
    'parked', 'lane', 'median', 'sidewalk', 'signal', 'work-zone', 'school-zone', 'bus-stop',
    # quantity and position words (56-63)
    'single', 'several', 'left', 'right', 'ahead', 'behind', 'near', 'far',
)

TOKEN_IDS: Dict[str, int] = {word: index for index, word in enumerate(VOCABULARY)}

VOCAB_SIZE = len(VOCABULARY)

# Scenario descriptor -> token bigram. The bigram is the text-side signal of
# a hazard; generators also emit it as a noisy distractor in negatives.
SCENARIO_BIGRAMS: Dict[str, Tuple[str, str]] = {
    'pedestrian_crossing': ('pedestrian', 'crossing'),
    'cut_in': ('car', 'cutting-in'),
    'lead_braking': ('car', 'braking'),
    'red_light': ('running', 'red-light'),
    'motorcycle_overtaking': ('motorcycle', 'overtaking'),
    'cyclist_swerving': ('cyclist', 'swerving'),
    'oncoming_bus': ('oncoming', 'bus'),
    'jaywalking': ('pedestrian', 'jaywalking'),
}

WEATHER_TOKENS = ('clear', 'rain', 'fog', 'snow')
LIGHT_TOKENS = ('day', 'night', 'dusk')
ROAD_TOKENS = ('urban', 'highway', 'rural', 'intersection', 'roundabout', 'two-lane', 'narrow')
DENSITY_TOKENS = ('light-traffic', 'moderate-traffic', 'dense-traffic', 'congested')
EGO_TOKENS = ('ego-cruising', 'ego-slowing', 'ego-accelerating')


def encode_words(words: Sequence[str], length: int) -> List[int]:
    """
    Map words to token ids, truncating or padding to a fixed length

    Args:
        words: Vocabulary words
        length: Output length (pad id 0)

    Returns:
        List of token ids
    """
    ids = []
    for word in words:
        if word not in TOKEN_IDS:
            raise InputError(f"Word not in vocabulary: {word!r}")
        ids.append(TOKEN_IDS[word])
    ids = ids[:length]
    return ids + [PAD_ID] * (length - len(ids))


def decode_tokens(ids: Sequence[int]) -> List[str]:
    """Map non-pad token ids back to words"""
    words = []
    for token in ids:
        if not 0 <= int(token) < VOCAB_SIZE:
            raise InputError(f"Token id out of range: {token}")
        if token != PAD_ID:
            words.append(VOCABULARY[int(token)])
    return words
