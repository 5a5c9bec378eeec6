"""
Object Catalog - Training and evaluation object sets.

The training catalog mixes four fixed evaluation objects (marked seen)
with sampled objects named after the dataset's household items. The
evaluation catalog holds the ten fixed objects: four seen, six unseen.
"""

import json
import math
from collections import Counter
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .logger import get_logger
from .physics import MASS_RANGE_KG, CatalogError, ObjectSpec, log_uniform

log = get_logger("Catalog")

DELICATE_CRUSH_LIMIT = 3.0
GRAVITY = 9.81

# Objects grasped in training and again at evaluation time
SEEN_EVAL_OBJECTS = (
    ObjectSpec("empty paper cup", rest_width=65.0, mass=0.008, friction_mu=0.5, stiffness_k=0.15,
               crush_force=2.5, yield_force=1.5, plasticity=0.3, seen=True),
    ObjectSpec("raspberry", rest_width=22.0, mass=0.005, friction_mu=0.6, stiffness_k=0.08,
               crush_force=0.9, yield_force=0.5, plasticity=0.5, seen=True),
    ObjectSpec("tomato", rest_width=55.0, mass=0.12, friction_mu=0.6, stiffness_k=0.35,
               crush_force=6.0, yield_force=1.6, plasticity=0.15, seen=True),
    ObjectSpec("paper cup with water", rest_width=65.0, mass=0.25, friction_mu=0.5, stiffness_k=0.4,
               crush_force=5.0, yield_force=3.5, plasticity=0.2, seen=True),
)

UNSEEN_EVAL_OBJECTS = (
    ObjectSpec("blackberry", rest_width=20.0, mass=0.006, friction_mu=0.6, stiffness_k=0.1,
               crush_force=1.0, yield_force=0.5, plasticity=0.5),
    ObjectSpec("egg", rest_width=44.0, mass=0.06, friction_mu=0.35, stiffness_k=2.0,
               crush_force=25.0, yield_force=20.0, plasticity=0.0),
    ObjectSpec("empty metal can", rest_width=66.0, mass=0.015, friction_mu=0.4, stiffness_k=0.8,
               crush_force=4.0, yield_force=2.0, plasticity=0.6),
    ObjectSpec("empty soft-shelled taco", rest_width=50.0, mass=0.02, friction_mu=0.7, stiffness_k=0.05,
               crush_force=1.5, yield_force=0.8, plasticity=0.4),
    ObjectSpec("pepper", rest_width=60.0, mass=0.15, friction_mu=0.6, stiffness_k=0.3,
               crush_force=8.0, yield_force=1.8, plasticity=0.15),
    ObjectSpec("potato chip", rest_width=30.0, mass=0.002, friction_mu=0.5, stiffness_k=0.6,
               crush_force=0.6, yield_force=0.4, plasticity=0.0),
)

# Household items ordered from lightest to heaviest; sampled masses are
# assigned in the same order so a name hints at how hard to squeeze
TRAINING_OBJECT_NAMES = (
    "paper airplane", "light green chip", "peeled garlic clove", "garlic clove", "bottle cap",
    "scallion stalk", "red button", "strawberry", "ziptie bag", "cherry tomato",
    "mushroom", "small suction cup", "yellow ducky", "garlic bulb", "green block",
    "yellow block", "circuit board", "green circuit board", "orange noodle bag", "red screwdriver handle",
    "stuffed animal", "small black motor", "small red green apple", "small avocado", "cardboard box",
    "plastic bottle", "orange bottle", "metal lock", "large bearing", "water bottle",
)


def evaluation_catalog() -> List[ObjectSpec]:
    """
    Fixed ten-object evaluation catalog.

    Returns:
        Four seen objects followed by six unseen objects
    """
    return list(SEEN_EVAL_OBJECTS) + list(UNSEEN_EVAL_OBJECTS)


def _holding_target(mass: float, mu: float) -> float:
    # Expert target with a 1.2 slip margin and the 0.15 N floor
    return max(0.15, 1.2 * mass * GRAVITY / (2 * mu))


def _sample_spec(name: str, mass: float, delicate: bool, rng: np.random.Generator) -> ObjectSpec:
    mu = float(rng.uniform(0.3, 1.0))
    rest_width = float(rng.uniform(5.0, 65.0))
    target = _holding_target(mass, mu)

    if delicate:
        crush = float(rng.uniform(max(0.6, 2.5 * target), 2.95))
        plasticity = float(rng.uniform(0.1, 0.5))
    else:
        crush = max(DELICATE_CRUSH_LIMIT, 2.5 * target) * log_uniform(rng, 1.0, 8.0)
        plasticity = float(rng.uniform(0.0, 0.2))
    yield_force = crush * float(rng.uniform(0.55, 0.8))

    # The object must push back hard enough to be crushed before the fingers meet
    stiffness = max(log_uniform(rng, 0.08, 2.0), 2.0 * crush / rest_width)

    return ObjectSpec(
        name=name,
        rest_width=rest_width,
        mass=mass,
        friction_mu=mu,
        stiffness_k=stiffness,
        crush_force=crush,
        yield_force=yield_force,
        plasticity=plasticity,
        seen=True,
    )


def _can_be_delicate(mass: float) -> bool:
    # Even the lowest-friction draw leaves room for a crush force below the limit
    return 2.5 * _holding_target(mass, 0.3) < 2.9


def sample_object_catalog(n: int, rng: np.random.Generator) -> List[ObjectSpec]:
    """
    Build a deterministic training catalog.

    Masses are stratified log-uniformly over 1 g to 500 g; light objects are
    mostly delicate (crush below 3 N) and at least a third of the catalog is.
    Names follow mass rank through TRAINING_OBJECT_NAMES. The first
    min(n, 4) objects are the seen evaluation objects, so for n <= 4 the
    catalog is fixed and the stream is not drawn from.

    Args:
        n: Number of objects
        rng: Catalog stream

    Returns:
        List of n object specs, all marked seen
    """
    if n < 1:
        raise CatalogError("Catalog size must be at least 1 (empty catalog requested)")

    anchors = [replace(spec, seen=True) for spec in SEEN_EVAL_OBJECTS[:n]]
    count = n - len(anchors)
    if count == 0:
        return anchors

    # Stratified log-uniform masses in shuffled order
    lo, hi = math.log(MASS_RANGE_KG[0]), math.log(MASS_RANGE_KG[1])
    strata = (np.arange(count) + rng.uniform(0.0, 1.0, size=count)) / count
    masses = np.exp(lo + strata * (hi - lo))
    masses = np.clip(masses[rng.permutation(count)], *MASS_RANGE_KG)

    delicate = [_can_be_delicate(m) and rng.random() < 0.8 for m in masses]

    # Top up the delicate stratum from the lightest eligible objects
    wanted = math.ceil(n / 3) - sum(spec.delicate for spec in anchors)
    for index in np.argsort(masses, kind="stable"):
        if sum(delicate) >= wanted:
            break
        if not delicate[index] and _can_be_delicate(masses[index]):
            delicate[index] = True

    rank = np.empty(count, dtype=int)
    rank[np.argsort(masses, kind="stable")] = np.arange(count)
    uses = Counter()

    catalog = list(anchors)
    for i in range(count):
        base = TRAINING_OBJECT_NAMES[rank[i] * len(TRAINING_OBJECT_NAMES) // count]
        uses[base] += 1
        name = base if uses[base] == 1 else f"{base} #{uses[base]}"
        catalog.append(_sample_spec(name, float(masses[i]), delicate[i], rng))

    log.info(
        f"Sampled catalog of {n} objects "
        f"({sum(spec.delicate for spec in catalog)} delicate)"
    )
    return catalog


def save_catalog(catalog: Sequence[ObjectSpec], path: Path):
    """
    Write a catalog as JSON, one object per record.

    Args:
        catalog: Object specs
        path: Output file
    """
    path = Path(path)
    records = [asdict(spec) for spec in catalog]
    path.write_text(json.dumps({"objects": records}, indent=2) + "\n", encoding="utf-8")


def load_catalog(path: Path) -> List[ObjectSpec]:
    """
    Read a catalog written by save_catalog.

    Args:
        path: Catalog JSON file

    Returns:
        List of validated object specs
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CatalogError(f"Catalog {path} is not valid JSON: {e}")

    records = raw.get("objects") if isinstance(raw, dict) else None
    if not records:
        raise CatalogError(f"Catalog {path} has no objects")

    catalog = []
    for i, record in enumerate(records):
        try:
            catalog.append(ObjectSpec(**record))
        except TypeError as e:
            raise CatalogError(f"Catalog record {i} is malformed: {e}")
    return catalog
