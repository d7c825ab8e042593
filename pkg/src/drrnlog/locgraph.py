"""Approximate state hash from a location graph.

Two pieces of context are extracted from the running game:

* a *nearby profile* of the current room: its name plus, for every direction
  that changes the world, the name (or, deeper, the profile) of the room it
  leads to.  This tells apart rooms that share a name, like maze cells.
* a *location map* from location keys to the look text seen at the most
  recent visit, so information revealed elsewhere (a key glinting at the
  bottom of a well) stays available.

Both are serialized canonically and hashed into fixed random vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .engine import DIRECTIONS, EnvDoneError, TextGameEnv
from .hashrep import HashConfig, hash_vec, str_hash

LOCATE = "locate"
GT_ROOM = "gt_room"

LocationMap = dict  # LocationKey -> last look text, insertion ordered


@dataclass(frozen=True)
class NearbyProfile:
    room_name: str
    nearby: tuple[tuple[str, Union[str, "NearbyProfile"]], ...]

    def to_json(self):
        return {
            "name": self.room_name,
            "nearby": [[d, n.to_json() if isinstance(n, NearbyProfile) else n] for d, n in self.nearby],
        }

    @classmethod
    def from_json(cls, obj) -> "NearbyProfile":
        nearby = tuple((d, cls.from_json(n) if isinstance(n, dict) else n) for d, n in obj["nearby"])
        return cls(obj["name"], nearby)


@dataclass(frozen=True)
class ApproxState:
    po1_vec: np.ndarray
    po2_vec: np.ndarray


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def locate(env: TextGameEnv, depth: int = 1) -> NearbyProfile:
    """Depth-limited exploration of the neighbourhood of the current room.

    Every probe is undone through snapshot/restore, so the environment is left
    exactly as it was found (same state hash, no reward, no turn spent).
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if env.done:
        raise EnvDoneError("locate() on a finished episode")
    state = env.snapshot()
    room = env.room_name()
    nearby = []
    for direction in DIRECTIONS:
        result = env.step(direction)
        if result.world_changed:
            if depth > 1 and not env.done:
                d = locate(env, depth - 1)
            else:
                d = env.room_name()
            nearby.append((direction, d))
        env.restore(state)
    nearby.sort(key=lambda pair: pair[0])
    return NearbyProfile(room, tuple(nearby))


def serialize_profile(p: NearbyProfile) -> str:
    return _canonical(p.to_json())


def parse_profile(s: str) -> NearbyProfile:
    return NearbyProfile.from_json(json.loads(s))


def serialize_map(m: LocationMap) -> str:
    """Canonical JSON object with sorted keys; an empty map is ``{}``."""
    return _canonical(dict(m))


def parse_map(s: str) -> LocationMap:
    return json.loads(s)


def location_key(env: TextGameEnv, key_mode: str = LOCATE, depth: int = 1) -> str:
    if key_mode == LOCATE:
        return serialize_profile(locate(env, depth))
    if key_mode == GT_ROOM:
        return env.gt_room_id()
    raise ValueError(f"unknown key mode {key_mode!r}")


def update_and_get_state(
    env: TextGameEnv, locmap: LocationMap, key_mode: str = LOCATE, depth: int = 1, key: str | None = None
) -> LocationMap:
    """Record the current look text under the current location key."""
    if env.done:
        raise EnvDoneError("update_and_get_state() on a finished episode")
    if key is None:
        key = location_key(env, key_mode, depth)
    locmap[key] = env.look_text()
    return locmap


def approx_state(
    env: TextGameEnv, locmap: LocationMap, cfg: HashConfig = HashConfig(), depth: int = 1, key: str | None = None
) -> ApproxState:
    if key is None:
        key = serialize_profile(locate(env, depth))
    return ApproxState(hash_vec(key, cfg).values, hash_vec(serialize_map(locmap), cfg).values)


def trajectory_record(env: TextGameEnv, locmap: LocationMap, key: str, step: int, action: str | None) -> dict:
    """One line of a trajectory dump, enough to recompute location agreement offline."""
    return {
        "step": step,
        "action": action,
        "location_key": key,
        "map_hash": f"{str_hash(serialize_map(locmap)):#018x}",
        "gt_room_id": env.gt_room_id(),
        "gt_state_hash": f"{env.gt_state_hash():#018x}",
    }
