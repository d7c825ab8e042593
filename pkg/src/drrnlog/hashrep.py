"""Non-semantic hash representations.

Strings are mapped to 64-bit integers with FNV-1a, and the integer seeds a
splitmix64 stream whose outputs are turned into standard normal draws with the
Box-Muller transform.  Everything here is pure and portable: the same string
and dimension give the same vector on every platform and in every process.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF

SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
GENERATOR_ID = "splitmix64-boxmuller"

DEFAULT_DIM = 128


@dataclass(frozen=True)
class HashConfig:
    dim: int = DEFAULT_DIM
    generator_id: str = GENERATOR_ID

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"hash dim must be positive, got {self.dim}")
        if self.generator_id != GENERATOR_ID:
            raise ValueError(f"unknown generator {self.generator_id!r}")


@dataclass(frozen=True)
class HashVector:
    values: np.ndarray
    source_hash: int


def str_hash(s: str) -> int:
    """FNV-1a (64-bit) over the UTF-8 bytes of ``s``."""
    h = FNV_OFFSET
    for byte in s.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def _splitmix64(seed: int, n: int) -> np.ndarray:
    # splitmix64 is counter based: output k mixes seed + (k + 1) * gamma
    with np.errstate(over="ignore"):
        counter = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(SPLITMIX_GAMMA)
        z = counter + np.uint64(seed)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def normal_stream(seed: int, n: int) -> np.ndarray:
    """``n`` standard normal draws from a splitmix64 stream seeded by ``seed``.

    Consecutive outputs (x, y) form one Box-Muller pair with
    u1 = ((x >> 11) + 1) / 2**53 in (0, 1] and u2 = (y >> 11) / 2**53 in [0, 1);
    the pair yields r*cos(2*pi*u2) followed by r*sin(2*pi*u2), r = sqrt(-2 ln u1).
    """
    pairs = (n + 1) // 2
    raw = _splitmix64(seed, 2 * pairs)
    top = (raw >> np.uint64(11)).astype(np.float64)
    u1 = (top[0::2] + 1.0) * 2.0**-53
    u2 = top[1::2] * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


@lru_cache(maxsize=65536)
def _cached_vec(s: str, dim: int) -> tuple[np.ndarray, int]:
    seed = str_hash(s)
    values = normal_stream(seed, dim)
    values.setflags(write=False)
    return values, seed


def hash_vec(s: str, cfg: HashConfig = HashConfig()) -> HashVector:
    values, seed = _cached_vec(s, cfg.dim)
    return HashVector(values=values, source_hash=seed)


class HashCollisionError(RuntimeError):
    pass


class CollisionGuard:
    """Remembers a second, independent digest per 64-bit hash and raises on a collision.

    Keeping an 8-byte witness instead of the string itself bounds memory even
    when the hashed strings (serialized location maps) are long.
    """

    def __init__(self):
        self._seen: dict[int, bytes] = {}

    def __len__(self):
        return len(self._seen)

    def check(self, s: str) -> int:
        h = str_hash(s)
        witness = hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest()
        prev = self._seen.setdefault(h, witness)
        if prev != witness:
            raise HashCollisionError(f"64-bit hash collision on {h:#018x} (string {s[:80]!r})")
        return h


def obs_hash_rep(o: str, i: str, l: str, cfg: HashConfig = HashConfig()) -> np.ndarray:
    """Concatenated hash vectors of the observation triple, length ``3 * dim``."""
    return np.concatenate([hash_vec(o, cfg).values, hash_vec(i, cfg).values, hash_vec(l, cfg).values])


# -- golden file -----------------------------------------------------------

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_hashes.tsv"

GOLDEN_STRINGS = [
    "",
    "a",
    "foobar",
    "lantern",
    "lanterns",
    "look",
    "inventory",
    "take lantern",
    "turn on lantern",
    "north",
    "You are empty-handed.",
    "It is pitch black. You are likely to be eaten by a grue.",
    "Field",
    "Maze",
    "{}",
    '{"name":"Field","nearby":[["east","Cellar entrance"]]}',
    "0",
    "18446744073709551615",
    "café ☃",
    "tab\tand\nnewline",
]


def golden_line(s: str) -> str:
    vec = hash_vec(s, HashConfig(dim=8)).values
    entries = " ".join(f"{v:.12g}" for v in vec)
    return f"{json.dumps(s)}\t{str_hash(s):#018x}\t{entries}"


def write_golden(path: Path = GOLDEN_PATH, strings: list[str] = GOLDEN_STRINGS) -> None:
    path.write_text("".join(golden_line(s) + "\n" for s in strings), encoding="utf-8")


def check_golden(path: Path = GOLDEN_PATH) -> list[str]:
    """Compare every line of a golden file against the live implementation.

    Returns a list of human readable failures, empty when everything matches.
    """
    failures = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        return [f"cannot read golden file {path}: {exc}"]
    if not lines:
        return [f"golden file {path} is empty"]
    for n, line in enumerate(lines, 1):
        try:
            raw, hex_hash, entries = line.split("\t")
            s = json.loads(raw)
            expected_vec = [float(x) for x in entries.split()]
            expected_hash = int(hex_hash, 16)
        except ValueError as exc:
            failures.append(f"line {n}: malformed ({exc})")
            continue
        if str_hash(s) != expected_hash:
            failures.append(f"line {n}: str_hash({s!r}) = {str_hash(s):#018x}, golden {hex_hash}")
        got = hash_vec(s, HashConfig(dim=len(expected_vec))).values
        # golden entries carry 12 significant digits
        if not np.allclose(got, expected_vec, rtol=1e-11, atol=1e-12):
            failures.append(f"line {n}: hash_vec({s!r}) differs from golden entries")
    return failures
