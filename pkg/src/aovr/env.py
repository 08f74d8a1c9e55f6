"""Viewing-grid episode engine: wrap-around movement over an M x N grid of
view embeddings, observation delivery with optional occlusion, and the
heuristic baseline policies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import EmbeddingGridDataset
from .synth import DEFAULT_OCCLUSION_STRENGTH, apply_occlusion

N_ACTIONS = 25
ACTION_SPAN = 2          # moves are dm, dn in [-2, 2]
PROPRIO_DIM = 2 + 1 + N_ACTIONS  # (dm/2, dn/2) + null slot + one-hot action


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridAction:
    dm: int
    dn: int

    def __post_init__(self):
        if not (-ACTION_SPAN <= self.dm <= ACTION_SPAN and -ACTION_SPAN <= self.dn <= ACTION_SPAN):
            raise ValueError(f"action ({self.dm}, {self.dn}) outside the 5x5 window")

    @property
    def index(self) -> int:
        return (self.dm + ACTION_SPAN) * 5 + (self.dn + ACTION_SPAN)

    @classmethod
    def from_index(cls, idx: int) -> "GridAction":
        if not (0 <= idx < N_ACTIONS):
            raise ValueError(f"action index {idx} out of range")
        return cls(dm=idx // 5 - ACTION_SPAN, dn=idx % 5 - ACTION_SPAN)


ALL_ACTIONS = [GridAction.from_index(i) for i in range(N_ACTIONS)]
CORNER_ACTIONS = [a for a in ALL_ACTIONS if abs(a.dm) == ACTION_SPAN and abs(a.dn) == ACTION_SPAN]


def proprio_vector(action: GridAction | None) -> np.ndarray:
    """(dm/2, dn/2, one-hot) with a reserved null slot for the first step."""
    vec = np.zeros(PROPRIO_DIM, dtype=np.float32)
    if action is None:
        vec[2] = 1.0
    else:
        vec[0] = action.dm / float(ACTION_SPAN)
        vec[1] = action.dn / float(ACTION_SPAN)
        vec[3 + action.index] = 1.0
    return vec


@dataclass
class OcclusionConfig:
    prob: float = 0.0
    strength: float = DEFAULT_OCCLUSION_STRENGTH
    # 'visit': corruption re-rolled each arrival; 'sticky': fixed per episode+cell
    mode: str = "visit"


@dataclass
class Observation:
    feature: np.ndarray
    position: tuple[int, int]
    proprio: np.ndarray


@dataclass
class EpisodeState:
    object_index: int
    label: int
    position: tuple[int, int]
    step_index: int                      # 1-based observation counter
    frames: list[np.ndarray] = field(default_factory=list)
    positions: list[tuple[int, int]] = field(default_factory=list)
    proprio_last: np.ndarray | None = None
    rng: np.random.Generator | None = None
    _sticky: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


class GridEnv:
    """One dataset + occlusion config; episodes own their state objects."""

    def __init__(self, dataset: EmbeddingGridDataset, horizon: int = 6,
                 occlusion: OcclusionConfig | None = None):
        self.dataset = dataset
        self.horizon = horizon
        self.occlusion = occlusion or OcclusionConfig()

    def _observe(self, state: EpisodeState, proprio: np.ndarray) -> Observation:
        grid = self.dataset.objects[state.object_index].grid
        feature = grid[state.position]
        occ = self.occlusion
        if occ.prob > 0.0:
            if occ.mode == "sticky":
                if state.position not in state._sticky:
                    state._sticky[state.position] = apply_occlusion(
                        feature, occ.prob, occ.strength, state.rng)
                feature = state._sticky[state.position]
            else:
                feature = apply_occlusion(feature, occ.prob, occ.strength, state.rng)
        state.frames.append(feature)
        state.positions.append(state.position)
        state.proprio_last = proprio
        return Observation(feature=feature, position=state.position, proprio=proprio)

    def reset(self, object_index: int, seed) -> tuple[EpisodeState, Observation]:
        if not (0 <= object_index < len(self.dataset.objects)):
            raise IndexError(f"object index {object_index} out of range")
        rng = np.random.default_rng(seed)
        m = int(rng.integers(0, self.dataset.azimuths))
        n = int(rng.integers(0, self.dataset.elevations))
        state = EpisodeState(object_index=object_index,
                             label=self.dataset.objects[object_index].class_index,
                             position=(m, n), step_index=1, rng=rng)
        obs = self._observe(state, proprio_vector(None))
        return state, obs

    def step(self, state: EpisodeState, action: GridAction) -> Observation:
        if state.step_index >= self.horizon:
            raise EpisodeError(f"episode already at step {state.step_index} of {self.horizon}")
        m = (state.position[0] + action.dm) % self.dataset.azimuths
        n = (state.position[1] + action.dn) % self.dataset.elevations
        state.position = (m, n)
        state.step_index += 1
        return self._observe(state, proprio_vector(action))


def random_policy(state: EpisodeState, rng: np.random.Generator) -> GridAction:
    """Uniform over all 25 actions."""
    return ALL_ACTIONS[int(rng.integers(0, N_ACTIONS))]


def largest_step_policy(state: EpisodeState, rng: np.random.Generator) -> GridAction:
    """A movement of maximal Euclidean length: one of the four corners,
    tie broken uniformly."""
    return CORNER_ACTIONS[int(rng.integers(0, len(CORNER_ACTIONS)))]
