"""Generator for gallery.game, a long chain of rooms with paraphrased texts.

Each room holds one treasure and a few traps.  Treasures carry an adjective
from a small "precious" family and traps one from a "dangerous" family, and
nouns are shuffled across rooms, so an agent that reads words can carry what
it learned in one room to the next, while an agent that only sees hashes has
to learn every room from scratch.  Room descriptions are assembled from
interchangeable phrase templates.

Run ``python -m drrnlog.gallery`` to regenerate the bundled file.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

TREASURE_ADJ = ("golden", "gilded")
TRAP_ADJ = ("cursed", "poisoned", "haunted", "rotten", "venomous")
NOUNS = (
    "goblet", "crown", "mask", "idol", "chalice", "amulet", "lantern", "scepter", "mirror", "bell",
    "casket", "dagger", "harp", "urn", "ring", "orb", "statue", "helm", "brooch", "flute",
    "tiara", "coin", "key", "vase", "shield", "bowl", "clock", "locket", "skull", "fan",
)
HALL_COLORS = (
    "Amber", "Azure", "Cobalt", "Crimson", "Ebony", "Emerald", "Ivory", "Jade", "Lilac", "Ochre",
    "Onyx", "Pearl", "Russet", "Saffron", "Scarlet", "Sepia", "Teal", "Umber", "Violet", "Cedar",
    "Copper", "Slate", "Coral", "Indigo",
)
HALL_KINDS = ("Gallery", "Hall", "Chamber", "Salon")

OPENERS = (
    "A {size} {kind} lit by {light}.",
    "You stand in a {size} {kind}, lit by {light}.",
    "This {size} {kind} is lit by {light}.",
)
SIZES = ("narrow", "long", "wide", "cramped", "lofty")
LIGHTS = ("flickering torches", "a high skylight", "hanging lamps", "candles in sconces")
WAYS = (
    "The way continues east and returns west.",
    "An arch leads east; another leads back west.",
    "Doorways open to the east and to the west.",
)
FIRST_WAY = "An arch leads east."
LAST_WAY = "The only way out is back to the west."

TREASURE_RESPONSE = "You pocket the {name}. It is worth a small fortune."
TRAP_RESPONSE = "You touch the {name}. A chill runs through you and you collapse."


def build_gallery(n_rooms: int = 24, n_traps: int = 5, seed: int = 7, reward: int = 5) -> dict:
    """Game document for a chain of ``n_rooms`` rooms, each with one treasure and ``n_traps`` traps."""
    if n_rooms < 2 or n_rooms > len(HALL_COLORS):
        raise ValueError(f"n_rooms must be in [2, {len(HALL_COLORS)}]")
    if n_traps < 0 or n_traps > len(TRAP_ADJ):
        raise ValueError(f"n_traps must be in [0, {len(TRAP_ADJ)}]")
    rng = random.Random(seed)
    rooms, objects, triggers = [], [], []
    for k in range(n_rooms):
        rid = f"g{k:02d}"
        name = f"{HALL_COLORS[k]} {rng.choice(HALL_KINDS)}"
        kind = name.split()[-1].lower()
        opener = rng.choice(OPENERS).format(size=rng.choice(SIZES), kind=kind, light=rng.choice(LIGHTS))
        way = FIRST_WAY if k == 0 else LAST_WAY if k == n_rooms - 1 else rng.choice(WAYS)
        exits = {}
        if k > 0:
            exits["west"] = f"g{k - 1:02d}"
        if k < n_rooms - 1:
            exits["east"] = f"g{k + 1:02d}"
        rooms.append({"id": rid, "name": name, "desc": f"{opener} {way}", "exits": exits})

        nouns = rng.sample(NOUNS, n_traps + 1)
        items = [(rng.choice(TREASURE_ADJ), nouns[0], True)]
        items += [(adj, noun, False) for adj, noun in zip(rng.sample(TRAP_ADJ, n_traps), nouns[1:])]
        rng.shuffle(items)
        for j, (adj, noun, good) in enumerate(items):
            oid = f"{rid}_{j}"
            oname = f"{adj} {noun}"
            objects.append({"id": oid, "name": oname, "initial_location": rid, "portable": False})
            if good:
                effects = [{"move_object": [oid, "nowhere"]}, {"reward": reward}]
                triggers.append({"id": f"{oid}_take", "verb_phrase": f"take {oname}", "room": rid,
                                 "effects": effects, "once": True,
                                 "response": TREASURE_RESPONSE.format(name=oname)})
            else:
                triggers.append({"id": f"{oid}_take", "verb_phrase": f"take {oname}", "room": rid,
                                 "effects": [{"kill_player": True}], "once": False,
                                 "response": TRAP_RESPONSE.format(name=oname)})
    meta = {"name": "gallery", "max_score": reward * n_rooms, "start_room": "g00"}
    return {"meta": meta, "rooms": rooms, "objects": objects, "triggers": triggers}


def render(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def main():
    path = Path(__file__).parent / "games" / "gallery.game"
    path.write_text(render(build_gallery()), encoding="utf-8")
    print(path)


if __name__ == "__main__":
    main()
