"""Synthetic evaluation data: 2PL response sampling, reference domain
configurations, and MCAR / difficulty-biased observation-mask generators.

All generators are pure functions of (parameters, seed) via numpy's seeded
Generator, so identical inputs reproduce identical masks and matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit

from .matrix import ResponseMatrix, bipartite_connected
from .model import ItemParameterSet

_MASK64 = (1 << 64) - 1

DOMAIN_NAMES = ("nlp", "clinical", "av", "cyber")


class GenerationError(RuntimeError):
    """Mask or response generation could not satisfy its constraints."""


def mix_seed(*parts: int) -> int:
    """Stable splitmix64-style mixing of integers into a child seed."""
    state = 0x243F6A8885A308D3
    for part in parts:
        state = (state + 0x9E3779B97F4A7C15 + (int(part) & _MASK64)) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        state = z ^ (z >> 31)
    return state


@dataclass(frozen=True)
class MaskConstraints:
    """Minimum observation counts a generated mask must satisfy."""

    min_items_per_system: int = 2
    min_systems_per_item: int = 3
    max_attempts: int = 1000


@dataclass(frozen=True)
class DomainConfig:
    """A named experiment: ground truth, observation mask, trial count."""

    name: str
    theta_true: np.ndarray
    items: ItemParameterSet
    mask: np.ndarray
    trials: int
    system_labels: tuple[str, ...]
    item_labels: tuple[str, ...]
    special_systems: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "theta_true", np.asarray(self.theta_true, dtype=float)
        )
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        j_n, i_n = mask.shape
        if self.theta_true.size != j_n or len(self.items) != i_n:
            raise GenerationError("truth dimensions do not match the mask")
        if not _mask_ok(mask, MaskConstraints()):
            raise GenerationError(
                f"domain {self.name!r}: mask violates observation constraints"
            )

    @property
    def n_systems(self) -> int:
        return self.mask.shape[0]

    @property
    def n_items(self) -> int:
        return self.mask.shape[1]

    @property
    def coverage(self) -> float:
        return float(self.mask.sum() / self.mask.size)


@dataclass(frozen=True)
class SweepCellSpec:
    """One grid-sweep condition."""

    sparsity: float
    gap: float
    mechanism: str
    n_systems: int = 10
    n_items: int = 10
    trials: int = 100
    seed: int = 0


def generate_responses(
    theta,
    items: ItemParameterSet,
    mask,
    trials: int,
    seed: int,
    system_labels: tuple[str, ...] | None = None,
    item_labels: tuple[str, ...] | None = None,
) -> ResponseMatrix:
    """Sample each observed cell's success count ~ Binomial(trials, P_ji)
    with P from the 2PL model at the given truth."""
    theta = np.asarray(theta, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    j_n, i_n = mask.shape
    if trials < 1:
        raise GenerationError("trials must be >= 1")
    if theta.size != j_n or len(items) != i_n:
        raise GenerationError("truth dimensions do not match the mask")
    if system_labels is None:
        system_labels = tuple(f"S{j + 1:02d}" for j in range(j_n))
    if item_labels is None:
        item_labels = tuple(f"I{i + 1:02d}" for i in range(i_n))
    jj, ii = np.nonzero(mask)  # row-major: sorted by (system, item)
    probs = expit(items.a[ii] * (theta[jj] - items.b[ii]))
    rng = np.random.default_rng(seed)
    successes = rng.binomial(trials, probs)
    cells = {
        (int(j), int(i)): (int(s), int(trials))
        for j, i, s in zip(jj, ii, successes)
    }
    return ResponseMatrix(
        n_systems=j_n,
        n_items=i_n,
        cells=cells,
        system_labels=tuple(system_labels),
        item_labels=tuple(item_labels),
    )


def _mask_ok(mask: np.ndarray, constraints: MaskConstraints) -> bool:
    row_counts = mask.sum(axis=1)
    col_counts = mask.sum(axis=0)
    if row_counts.min() < constraints.min_items_per_system:
        return False
    if col_counts.min() < constraints.min_systems_per_item:
        return False
    return bipartite_connected(
        mask.shape[0], mask.shape[1], zip(*np.nonzero(mask))
    )


def _repair_mask(
    mask: np.ndarray, constraints: MaskConstraints, rng: np.random.Generator
) -> bool:
    """Move observations from surplus rows/columns into deficient ones,
    keeping the total count fixed.  Returns False when stuck (caller
    resamples).  Column deficits are fixed by within-row swaps when
    possible so per-system counts stay untouched; each move clears one
    deficit and never creates a new one, so the loop is bounded."""
    min_row = constraints.min_items_per_system
    min_col = constraints.min_systems_per_item
    j_n, i_n = mask.shape
    max_moves = 2 * (min_row * j_n + min_col * i_n) + 8
    for _ in range(max_moves):
        row_counts = mask.sum(axis=1)
        col_counts = mask.sum(axis=0)
        row_def = np.flatnonzero(row_counts < min_row)
        col_def = np.flatnonzero(col_counts < min_col)
        if row_def.size == 0 and col_def.size == 0:
            return True
        if col_def.size and not row_def.size:
            i = int(rng.choice(col_def))
            # Swap inside one row: take an observation away from a surplus
            # column in a row that misses column i.
            donors = mask & (col_counts[None, :] > min_col)
            rows = np.flatnonzero(~mask[:, i] & donors.any(axis=1))
            if rows.size == 0:
                return False
            j = int(rng.choice(rows))
            i_from = int(rng.choice(np.flatnonzero(donors[j])))
            mask[j, i_from] = False
            mask[j, i] = True
            continue
        # Row deficit: add a cell in the deficient row, remove one from a
        # strictly surplus (row, column) position elsewhere.
        j = int(rng.choice(row_def))
        i = int(rng.choice(np.flatnonzero(~mask[j])))
        mask[j, i] = True
        row_counts[j] += 1
        col_counts[i] += 1
        removable = (
            mask
            & (row_counts[:, None] > min_row)
            & (col_counts[None, :] > min_col)
        )
        removable[j, i] = False
        rj, ri = np.nonzero(removable)
        if rj.size == 0:
            mask[j, i] = False
            return False
        k = int(rng.integers(rj.size))
        mask[rj[k], ri[k]] = False
    return False


def make_mcar_mask(
    n_systems: int,
    n_items: int,
    sparsity: float,
    constraints: MaskConstraints = MaskConstraints(),
    seed: int = 0,
) -> np.ndarray:
    """Uniformly random mask with exactly round((1-S)*J*I) observed cells.

    Draws violating the min-per-side or connectivity constraints are
    repaired by count-preserving random moves where possible and otherwise
    resampled, up to constraints.max_attempts.
    """
    if not 0.0 <= sparsity < 1.0:
        raise GenerationError(f"sparsity must be in [0, 1), got {sparsity}")
    total = n_systems * n_items
    n_keep = int(round((1.0 - sparsity) * total))
    needed = max(
        constraints.min_items_per_system * n_systems,
        constraints.min_systems_per_item * n_items,
    )
    if n_keep < needed:
        raise GenerationError(
            f"sparsity {sparsity} keeps {n_keep} cells; constraints need >= {needed}"
        )
    rng = np.random.default_rng(seed)
    if n_keep == total:
        return np.ones((n_systems, n_items), dtype=bool)
    for _ in range(constraints.max_attempts):
        mask = np.zeros(total, dtype=bool)
        mask[rng.choice(total, size=n_keep, replace=False)] = True
        mask = mask.reshape(n_systems, n_items)
        if not _repair_mask(mask, constraints, rng):
            continue
        if _mask_ok(mask, constraints):
            return mask
    raise GenerationError(
        f"no valid MCAR mask after {constraints.max_attempts} attempts"
    )


def make_biased_mask(
    n_systems: int,
    n_items: int,
    sparsity: float,
    abilities,
    difficulties,
    constraints: MaskConstraints = MaskConstraints(),
    seed: int = 0,
) -> np.ndarray:
    """Difficulty-biased mask: each system keeps a contiguous window of the
    difficulty-sorted items, placed by ability rank, so low-ability systems
    drop the hardest items and high-ability systems the easiest.

    The total dropped count matches the MCAR mask at the same sparsity
    (J*I - round((1-S)*J*I)), spread as evenly as possible over systems.
    Fractional window positions round down for even ability ranks and up
    for odd ones, so neighbouring systems' windows interleave instead of
    shifting in lockstep; repair then enforces the observation constraints
    as for MCAR masks.  Adjacent windows overlap, mirroring how real
    evaluations bias coverage: every system is tested on a difficulty band
    that tracks how good it is.
    """
    if not 0.0 <= sparsity < 1.0:
        raise GenerationError(f"sparsity must be in [0, 1), got {sparsity}")
    abilities = np.asarray(abilities, dtype=float)
    difficulties = np.asarray(
        getattr(difficulties, "b", difficulties), dtype=float
    )
    if abilities.size != n_systems or difficulties.size != n_items:
        raise GenerationError("ability/difficulty lengths do not match mask shape")
    total = n_systems * n_items
    total_drop = total - int(round((1.0 - sparsity) * total))
    if total_drop <= 0:
        return np.ones((n_systems, n_items), dtype=bool)
    base_drop, n_extra = divmod(total_drop, n_systems)
    if n_items - base_drop - (1 if n_extra else 0) < constraints.min_items_per_system:
        raise GenerationError(
            f"sparsity {sparsity} leaves too few items per system; "
            f"constraints need >= {constraints.min_items_per_system}"
        )
    by_difficulty = np.argsort(difficulties, kind="stable")  # easiest first
    ability_rank = np.empty(n_systems, dtype=int)
    ability_rank[np.argsort(abilities, kind="stable")] = np.arange(n_systems)
    rng = np.random.default_rng(seed)
    for _ in range(constraints.max_attempts):
        extra = set(rng.choice(n_systems, size=n_extra, replace=False).tolist())
        mask = np.zeros((n_systems, n_items), dtype=bool)
        for j in range(n_systems):
            keep = n_items - base_drop - (1 if j in extra else 0)
            span = n_items - keep
            rank = int(ability_rank[j])
            target = rank / max(n_systems - 1, 1) * span
            start = math.floor(target) if rank % 2 == 0 else math.ceil(target)
            start = min(max(start, 0), span)
            mask[j, by_difficulty[start : start + keep]] = True
        if not _repair_mask(mask, constraints, rng):
            continue
        if _mask_ok(mask, constraints):
            return mask
    raise GenerationError(
        f"no valid biased mask after {constraints.max_attempts} attempts"
    )


def sweep_truth(
    gap: float, n_systems: int = 10, n_items: int = 10
) -> tuple[np.ndarray, ItemParameterSet]:
    """Grid-sweep ground truth: difficulties evenly spaced on
    [-gap/2, +gap/2], abilities evenly spaced on [-2, +2], discriminations
    fixed at 1.5."""
    if gap <= 0:
        raise GenerationError("difficulty gap must be > 0")
    theta = np.linspace(-2.0, 2.0, n_systems)
    items = ItemParameterSet(
        a=np.full(n_items, 1.5), b=np.linspace(-gap / 2.0, gap / 2.0, n_items)
    )
    return theta, items


# --- Reference domain configurations ---------------------------------------
# Item tables: (label, difficulty b*, discrimination a*).

_NLP_ITEMS = (
    ("SST-2", -0.72, 1.08),
    ("QQP", -0.55, 1.45),
    ("MNLI", -0.20, 2.10),
    ("QNLI", -0.10, 1.85),
    ("STS-B", 0.15, 1.60),
    ("MRPC", 0.30, 1.95),
    ("RTE", 0.65, 2.50),
    ("CoLA", 0.89, 3.21),
)
_NLP_SYSTEMS = (
    "DeBERTa",
    "T5",
    "ELECTRA",
    "StructBERT",
    "ERNIE",
    "ALBERT",
    "RoBERTa",
    "XLNet",
    "BERT-Large",
    "BERT-Base",
    "GPT",
    "ELMo",
)

_CLINICAL_ITEMS = (
    ("Community Clinic A", -1.0, 1.2),
    ("Community Clinic B", -0.5, 1.5),
    ("Regional Hospital C", 0.0, 2.0),
    ("Teaching Hospital D", 0.5, 2.5),
    ("Specialty Center E", 1.0, 2.8),
    ("ICU Severe Ward F", 1.5, 3.0),
)
_CLINICAL_SYSTEMS = (
    "True Miracle Drug",
    "Drug B",
    "Drug C",
    "Drug D",
    "Drug E",
    "Drug F",
    "Drug G",
    "Drug H",
    "Fake Miracle Drug",
    "Old Standard",
)
_CLINICAL_THETA = (2.0, 1.5, 1.2, 0.9, 0.6, 0.3, 0.1, -0.05, -0.2, -1.5)

_AV_ITEMS = (
    ("Sunny Suburb", -1.5, 1.56),
    ("Clear Urban Day", -0.5, 2.10),
    ("Rainy Highway", 0.2, 2.45),
    ("Dense Urban Night", 0.5, 3.69),
    ("Fog Construction", 0.75, 2.90),
    ("Snowy Intersection", 1.0, 2.50),
)
_AV_SYSTEMS = (
    "True Safe AV",
    "AV Bravo",
    "AV Charlie",
    "AV Delta",
    "AV Echo",
    "AV Foxtrot",
    "AV Golf",
    "Fake Safe AV",
    "AV India",
    "AV Juliet",
)
_AV_THETA = (2.0, 1.4, 1.0, 0.7, 0.4, 0.1, -0.1, -0.3, -0.8, -1.5)

_CYBER_ITEMS = (
    ("Port Scan", -1.5, 1.00),
    ("DDoS", -0.8, 1.50),
    ("Basic Phishing", -0.3, 1.80),
    ("Ransomware", 0.5, 2.50),
    ("Zero-Day Exploit", 1.2, 3.00),
    ("Nation-State APT", 2.0, 3.50),
)
_CYBER_SYSTEMS = (
    "True Secure",
    "DeepScan AI",
    "Enterprise Shield",
    "NetGuard",
    "CyberWall",
    "SafePort",
    "Fake Secure",
    "LegacyDefender",
)
_CYBER_THETA = (2.0, 1.4, 1.1, 0.7, 0.4, 0.0, -0.5, -1.2)

# Frozen internal seeds for the residual random rows of each domain mask.
# Chosen (see tools/calibrate_domain_masks.py) so the fixed masks reproduce
# the reference ranking behaviour of each scenario.
_DOMAIN_MASK_SEEDS = {"clinical": 52, "av": 19, "cyber": 5121}

# Observed-cell targets giving coverages 1.00, 0.65, 0.60, 0.67.
_DOMAIN_CELL_TARGETS = {"clinical": 39, "av": 36, "cyber": 32}
_DOMAIN_TRIALS = {"nlp": 500, "clinical": 200, "av": 1000, "cyber": 500}

# Easy subset observed for the fake system, hard subset for the true system.
_FAKE_ITEMS = (0, 1, 2)
_TRUE_ITEMS = (2, 3, 4, 5)


def _domain_mask(
    n_systems: int,
    n_items: int,
    pinned_rows: dict[int, tuple[int, ...]],
    n_observed: int,
    seed: int,
    constraints: MaskConstraints = MaskConstraints(),
) -> np.ndarray:
    """Fixed special-system rows plus uniformly sampled remaining rows,
    resampled until the full mask satisfies the observation constraints."""
    fixed = np.zeros((n_systems, n_items), dtype=bool)
    for j, items in pinned_rows.items():
        fixed[j, list(items)] = True
    free_rows = [j for j in range(n_systems) if j not in pinned_rows]
    free_cells = [(j, i) for j in free_rows for i in range(n_items)]
    n_residual = n_observed - int(fixed.sum())
    if not 0 <= n_residual <= len(free_cells):
        raise GenerationError("domain cell target incompatible with pinned rows")
    rng = np.random.default_rng(seed)
    for _ in range(constraints.max_attempts):
        mask = fixed.copy()
        for k in rng.choice(len(free_cells), size=n_residual, replace=False):
            mask[free_cells[int(k)]] = True
        if _mask_ok(mask, constraints):
            return mask
    raise GenerationError(
        f"no valid domain mask after {constraints.max_attempts} attempts"
    )


def domain_config(name: str) -> DomainConfig:
    """Build one of the four reference domains (nlp, clinical, av, cyber).

    Masks are deterministic per domain: only response sampling varies
    across experiment seeds.
    """
    if name not in DOMAIN_NAMES:
        raise GenerationError(
            f"unknown domain {name!r}; expected one of {DOMAIN_NAMES}"
        )
    if name == "nlp":
        labels, theta = _NLP_SYSTEMS, np.linspace(2.0, -1.5, len(_NLP_SYSTEMS))
        item_table = _NLP_ITEMS
        mask = np.ones((len(labels), len(item_table)), dtype=bool)
        special: dict[str, int] = {}
    else:
        item_table = {"clinical": _CLINICAL_ITEMS, "av": _AV_ITEMS, "cyber": _CYBER_ITEMS}[name]
        labels = {"clinical": _CLINICAL_SYSTEMS, "av": _AV_SYSTEMS, "cyber": _CYBER_SYSTEMS}[name]
        theta = np.asarray(
            {"clinical": _CLINICAL_THETA, "av": _AV_THETA, "cyber": _CYBER_THETA}[name]
        )
        fake = labels.index(next(l for l in labels if l.startswith("Fake")))
        special = {"true": 0, "fake": fake}
        mask = _domain_mask(
            len(labels),
            len(item_table),
            {0: _TRUE_ITEMS, fake: _FAKE_ITEMS},
            _DOMAIN_CELL_TARGETS[name],
            _DOMAIN_MASK_SEEDS[name],
        )
    return DomainConfig(
        name=name,
        theta_true=theta,
        items=ItemParameterSet(
            a=np.array([a for _, _, a in item_table]),
            b=np.array([b for _, b, _ in item_table]),
        ),
        mask=mask,
        trials=_DOMAIN_TRIALS[name],
        system_labels=tuple(labels),
        item_labels=tuple(label for label, _, _ in item_table),
        special_systems=special,
    )


def domain_config_to_dict(config: DomainConfig) -> dict:
    """JSON-ready view of a domain configuration."""
    return {
        "name": config.name,
        "theta_true": [float(t) for t in config.theta_true],
        "items": [
            {"label": label, "a": float(a), "b": float(b)}
            for label, a, b in zip(
                config.item_labels, config.items.a, config.items.b
            )
        ],
        "mask": [[int(j), int(i)] for j, i in np.argwhere(config.mask)],
        "trials": int(config.trials),
    }
