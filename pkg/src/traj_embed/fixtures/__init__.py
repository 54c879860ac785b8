"""Reference processes used by the tests, the CLI examples and the README.

The JSON files next to this module are generated from these builders; ``load``
reads them back through the public spec reader.
"""

from __future__ import annotations

import math
from pathlib import Path

from ..process_core import Branch, DiscreteBranch, DiscreteProcessSpec, Exponential, ExpMixture, ProcessSpec

HERE = Path(__file__).parent


def two_channel(p: float = 0.25, gamma1: float = 2.0, gamma2: float = 1.0) -> ProcessSpec:
    """Two decay channels; a mode repeats its own symbol with probability ``p``."""
    q = 1.0 - p
    e1, e2 = Exponential(gamma1), Exponential(gamma2)
    return ProcessSpec(
        ("1", "2"),
        ("g1", "g2"),
        {
            "g1": (Branch("1", p, "g1", e1), Branch("2", q, "g2", e2)),
            "g2": (Branch("1", q, "g1", e1), Branch("2", p, "g2", e2)),
        },
    )


def three_state(phase: float = math.pi) -> DiscreteProcessSpec:
    """Chain on x, y, z that never repeats a symbol; ``phase`` sits on z -> y."""
    return DiscreteProcessSpec(
        ("x", "y", "z"),
        ("x", "y", "z"),
        {
            "x": (DiscreteBranch("y", 0.5, "y"), DiscreteBranch("z", 0.5, "z")),
            "y": (DiscreteBranch("x", 0.5, "x"), DiscreteBranch("z", 0.5, "z")),
            "z": (DiscreteBranch("x", 0.5, "x"), DiscreteBranch("y", 0.5, "y", phase)),
        },
    )


def poisson(rate: float = 1.0) -> ProcessSpec:
    return ProcessSpec(("e",), ("g",), {"g": (Branch("e", 1.0, "g", Exponential(rate)),)})


def cycle(n: int = 3) -> DiscreteProcessSpec:
    """Deterministic period-``n`` cycle ``0 -> 1 -> ... -> n-1 -> 0``."""
    names = tuple(str(i) for i in range(n))
    return DiscreteProcessSpec(
        names, names,
        {names[i]: (DiscreteBranch(names[(i + 1) % n], 1.0, names[(i + 1) % n]),) for i in range(n)},
    )


def rate_switch() -> ProcessSpec:
    """Each mode emits both symbols, at rates that depend on the mode."""
    return ProcessSpec(
        ("a", "b"),
        ("ga", "gb"),
        {
            "ga": (Branch("a", 0.4, "ga", Exponential(1.0)), Branch("b", 0.6, "gb", Exponential(3.0))),
            "gb": (Branch("a", 0.7, "ga", Exponential(2.0)), Branch("b", 0.3, "gb", Exponential(0.5))),
        },
    )


def mixed_renewal() -> ProcessSpec:
    """Two-rate mixture dwell laws; their memory has no finite dimension.

    Not shipped as a file: every shipped fixture runs through the full
    pipeline, and this one is refused by ``embed``.
    """
    a = ExpMixture((0.3, 0.7), (3.0, 0.8))
    b = ExpMixture((0.6, 0.4), (1.5, 0.5))
    return ProcessSpec(
        ("a", "b"),
        ("ga", "gb"),
        {
            "ga": (Branch("a", 0.4, "ga", a), Branch("b", 0.6, "gb", b)),
            "gb": (Branch("a", 0.7, "ga", a), Branch("b", 0.3, "gb", b)),
        },
    )


BUILDERS = {
    "two_channel": two_channel,
    "three_state": three_state,
    "poisson": poisson,
    "cycle3": cycle,
    "rate_switch": rate_switch,
}


def path(name: str) -> Path:
    return HERE / f"{name}.json"


def load(name: str):
    from ..io import read_spec

    return read_spec(path(name))


def regenerate() -> None:
    from ..io import write_spec

    for name, build in BUILDERS.items():
        write_spec(path(name), build())
