"""Dataset directory layout, loading, and fold assignment.

Layout: ``root/confocal/*.png``, ``root/sted/*.png``, optional
``root/dsted/*.png`` and ``root/truth/*.png``; paired samples share
filenames. ``manifest.json`` carries ids, quality tags, and generation
parameters for synthetic datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .images import load_image, save_image
from .synth import SampleTriplet, SynthConfig

DOMAINS = ("confocal", "sted", "dsted", "truth")


@dataclass
class Dataset:
    """In-memory dataset: per-domain id -> image maps."""

    root: Optional[Path] = None
    domains: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    quality: Dict[str, str] = field(default_factory=dict)

    @property
    def ids(self) -> List[str]:
        if "confocal" in self.domains:
            return sorted(self.domains["confocal"])
        first = next(iter(self.domains.values()))
        return sorted(first)

    def images(self, domain: str) -> Dict[str, np.ndarray]:
        if domain not in self.domains:
            raise KeyError(f"dataset has no domain {domain!r}; found {sorted(self.domains)}")
        return self.domains[domain]


@dataclass
class FoldAssignment:
    """Partition of sample ids into k folds of near-equal size."""

    k: int
    fold_of: Dict[str, int]

    def ids_in_fold(self, fold: int) -> List[str]:
        return sorted(i for i, f in self.fold_of.items() if f == fold)

    def ids_not_in_fold(self, fold: int) -> List[str]:
        return sorted(i for i, f in self.fold_of.items() if f != fold)


def write_dataset(samples: List[SampleTriplet], root, cfg: Optional[SynthConfig] = None) -> Path:
    """Write samples in the standard layout plus a manifest index."""
    root = Path(root)
    for domain in DOMAINS:
        (root / domain).mkdir(parents=True, exist_ok=True)
    manifest = {"samples": [], "generator": None if cfg is None else asdict(cfg)}
    for s in samples:
        for domain in DOMAINS:
            save_image(root / domain / f"{s.id}.png", getattr(s, domain))
        manifest["samples"].append({"id": s.id, "quality": s.quality})
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root


def load_dataset(root, mode: str = "paired") -> Dataset:
    """Load a dataset directory.

    Paired mode requires filename-matched files across all domain
    directories present; unpaired mode loads each domain independently.
    """
    if mode not in ("paired", "unpaired"):
        raise ValueError(f"unknown mode {mode!r}")
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    ds = Dataset(root=root)
    present = [d for d in DOMAINS if (root / d).is_dir()]
    if not present:
        raise FileNotFoundError(f"no domain directories under {root} (expected {DOMAINS})")
    for domain in present:
        files = sorted((root / domain).glob("*.png"))
        ds.domains[domain] = {f.stem: load_image(f) for f in files}
    if mode == "paired":
        id_sets = {d: set(ds.domains[d]) for d in present if ds.domains[d]}
        union = set().union(*id_sets.values())
        orphans = {}
        for domain, ids in id_sets.items():
            missing = union - ids
            if missing:
                orphans[domain] = sorted(missing)
        if orphans:
            details = "; ".join(f"{d} is missing {', '.join(m)}" for d, m in sorted(orphans.items()))
            raise ValueError(f"paired dataset {root} has unmatched files: {details}")
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        ds.quality = {s["id"]: s.get("quality", "high") for s in manifest.get("samples", [])}
    return ds


def make_folds(ids: List[str], k: int = 5, seed: int = 0) -> FoldAssignment:
    """Seeded shuffle + round-robin assignment into k folds."""
    if len(ids) < k:
        raise ValueError(f"need at least {k} ids for {k} folds, got {len(ids)}")
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    return FoldAssignment(k=k, fold_of={sid: i % k for i, sid in enumerate(order)})
