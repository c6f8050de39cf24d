"""Built-in graphs: the video-platform toy graph and a seeded tournament generator."""

from __future__ import annotations

import random

from .distance import DistanceFunction
from .gdd import VC, DistanceConstraint, Gdd
from .graph import Node, PropertyGraph
from .patterns import GraphPattern

_USERS = {
    # id: (FIRSTNAME, LASTNAME, PHONE, eid)
    "v2": ("Alice", "Liddell", "0400111222", "u2"),
    "v3": ("Leese", "Absolem", "0400333444", "u3"),
    "v4": ("Liese", "Absolem", "0400555666", "u3"),
    "v5": ("Lorina", "Liddell", "0400777888", "u5"),
    "v10": ("Tilly", "Hatter", "0400999000", "u10"),
    "v11": ("Tilly", "Hightopp", "0400999000", "u10"),
}


def video_platform_graph() -> PropertyGraph:
    """Twelve-node streaming-platform graph with two duplicated users.

    ``v3``/``v4`` share a last name, ``v10``/``v11`` share a phone and an
    ipaddress; both pairs carry the same eid.
    """
    nodes = [
        Node("v0", "video", None, {"TITLE": "Jabberwocky Live"}),
        Node("v1", "video", None, {"TITLE": "Tea Party Tales"}),
        Node("v6", "ipaddress", None, {"ADDRESS": "10.0.0.6"}),
        Node("v7", "ipaddress", None, {"ADDRESS": "10.0.0.7"}),
        Node("v8", "genre", None, {"NAME": "Comedy"}),
        Node("v9", "genre", None, {"NAME": "Fantasy"}),
    ]
    for vid, (fn, ln, ph, eid) in _USERS.items():
        nodes.append(Node(vid, "user", eid, {"FIRSTNAME": fn, "LASTNAME": ln, "PHONE": ph}))
    edges = [
        ("v0", "has", "v9"),
        ("v1", "has", "v8"),
        ("v2", "uses", "v6"),
        ("v5", "uses", "v6"),
        ("v3", "uses", "v7"),
        ("v4", "uses", "v7"),
        ("v10", "uses", "v7"),
        ("v11", "uses", "v7"),
        ("v2", "watched", "v0"),
        ("v4", "watched", "v0"),
        ("v3", "watched", "v1"),
        ("v5", "watched", "v1"),
    ]
    return PropertyGraph(nodes, edges)


def video_patterns() -> dict[str, GraphPattern]:
    return {
        "Q1": GraphPattern(("x", "y"), {"x": "video", "y": "genre"}, (("x", "has", "y"),), "Q1"),
        "Q2": GraphPattern(("x", "y", "z"), {"x": "user", "y": "ipaddress", "z": "video"},
                           (("x", "uses", "y"), ("x", "watched", "z")), "Q2"),
        "Q3": GraphPattern(("x", "x'", "y"), {"x": "user", "x'": "user", "y": "ipaddress"},
                           (("x", "uses", "y"), ("x'", "uses", "y")), "Q3"),
        "Q4": GraphPattern(("x", "y", "z"), {"x": "user", "y": "video", "z": "genre"},
                           (("x", "watched", "y"), ("y", "has", "z")), "Q4"),
    }


def video_rules() -> list[Gdd]:
    """The phone rule and the name rule over the shared-ipaddress scope."""
    q3 = video_patterns()["Q3"]
    edit = DistanceFunction("normalized-edit")
    phi1 = Gdd.linking(q3, [DistanceConstraint(VC, ("x", "x'"), "PHONE", 0.0, edit)], ("x", "x'"), name="phi1")
    phi2 = Gdd.linking(
        q3,
        [
            DistanceConstraint(VC, ("x", "x'"), "LASTNAME", 0.25, edit),
            DistanceConstraint(VC, ("x", "x'"), "FIRSTNAME", 0.30, edit),
        ],
        ("x", "x'"),
        name="phi2",
    )
    return [phi1, phi2]


# -- synthetic tournament graph -------------------------------------------

_ONSETS = ["b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
           "br", "ch", "dr", "gr", "kr", "pl", "sh", "st", "th", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "ie", "ou", "y"]


def _word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables)).capitalize()


def tournament_graph(seed: int = 0, persons: int = 1200, teams: int = 60, matches: int = 720,
                     tournaments: int = 20, squad: int = 11) -> PropertyGraph:
    """Seeded graph of players, teams, matches and tournaments.

    Every player plays for one team; each match pits two teams against each
    other and ``squad`` players of each appear in it. Players carry eids
    equal to their ids so duplicates derived later can be scored.
    """
    rng = random.Random(seed)
    nodes: list[Node] = []
    edges = []
    tour_ids = [f"t{i}" for i in range(tournaments)]
    for i, t in enumerate(tour_ids):
        nodes.append(Node(t, "tournament", None, {"NAME": f"{_word(rng, 2)} Cup", "YEAR": str(1991 + i)}))
    team_ids = [f"c{i}" for i in range(teams)]
    for c in team_ids:
        nodes.append(Node(c, "team", None, {"NAME": _word(rng, 3)}))
    roster: dict[str, list[str]] = {c: [] for c in team_ids}
    for i in range(persons):
        pid = f"p{i}"
        team = team_ids[i % teams]
        roster[team].append(pid)
        attrs = {
            "FIRSTNAME": _word(rng, rng.choice((2, 3))),
            "LASTNAME": _word(rng, rng.choice((3, 4))),
            "BIRTHDATE": f"{rng.randint(1970, 2004)}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}",
            "BIRTHPLACE": _word(rng, rng.choice((2, 3))) + " " + _word(rng, 2),
        }
        nodes.append(Node(pid, "person", pid, attrs))
        edges.append((pid, "plays_for", team))
    for i in range(matches):
        mid = f"m{i}"
        tour = tour_ids[i % tournaments]
        nodes.append(Node(mid, "match", None, {
            "DATE": f"{1991 + i % tournaments}-{rng.randint(6, 7):02d}-{rng.randint(1, 30):02d}",
            "STADIUM": _word(rng, 2) + " Park",
        }))
        edges.append((mid, "part_of", tour))
        home, away = rng.sample(team_ids, 2)
        for team in (home, away):
            edges.append((team, "competes_in", mid))
            for pid in rng.sample(roster[team], min(squad, len(roster[team]))):
                edges.append((pid, "played_in", mid))
    return PropertyGraph(nodes, edges)
