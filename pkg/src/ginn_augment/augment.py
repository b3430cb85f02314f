"""Augment the labeled set by imputing heavily damaged copies of labeled rows.

Copies are damaged MCAR, attached to the trained graph through their nearest
unlabeled nodes, filled by one forward pass of the trained autoencoder and
labeled with the class of the row they were copied from.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import EncodedMatrix, TabularDataset, apply_mcar, decode
from .graph import GraphAdjacency, inject_damaged_nodes, propagation_operator
from .model import TrainedModel

MAX_AUGMENTED_ROWS = 10_000_000
ORIGINAL = "original"


@dataclass(frozen=True)
class AugmentConfig:
    factor: int = 2
    damage_rate: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if int(self.factor) != self.factor or self.factor < 1:
            raise ValueError("factor must be an integer >= 1")
        if not 0 <= self.damage_rate < 1:
            raise ValueError("damage_rate must lie in [0, 1)")


@dataclass
class Candidates:
    damaged: EncodedMatrix
    mask: np.ndarray
    source: np.ndarray  # position in the labeled block


@dataclass
class AugmentedDataset:
    data: TabularDataset
    provenance: list  # source id for generated rows, ORIGINAL otherwise
    generated_values: np.ndarray  # imputed encoded rows, before decoding
    candidates: Candidates
    graph: GraphAdjacency

    def __len__(self):
        return len(self.data)


def generate_candidates(labeled: EncodedMatrix, mask: np.ndarray, cfg: AugmentConfig) -> Candidates:
    """``(factor - 1) * L`` damaged copies, cycling through the labeled rows in order."""
    n_l = labeled.values.shape[0]
    if n_l < 1:
        raise ValueError("need at least one labeled row")
    if cfg.factor * n_l > MAX_AUGMENTED_ROWS:
        raise OverflowError(f"factor {cfg.factor} x {n_l} rows exceeds {MAX_AUGMENTED_ROWS}")
    source = np.arange((cfg.factor - 1) * n_l) % n_l
    copies = EncodedMatrix(labeled.values[source], labeled.layout)
    damaged, dmask = apply_mcar(copies, mask[source], cfg.damage_rate, cfg.seed)
    return Candidates(damaged, dmask, source)


def augment(model: TrainedModel, adj: GraphAdjacency, x: np.ndarray, mask: np.ndarray,
            labeled_positions: Sequence[int], labeled_data: TabularDataset,
            cfg: AugmentConfig, source_ids: Optional[Sequence] = None) -> AugmentedDataset:
    """Return the labeled rows followed by ``(factor - 1) * L`` generated rows.

    ``x``/``mask`` are the encoded rows of the training graph ``adj``;
    ``labeled_positions`` picks the labeled rows among them, in the same order
    as ``labeled_data``. ``source_ids`` names each labeled row in the
    provenance column (defaults to its position in ``labeled_data``).
    """
    pos = np.asarray(labeled_positions, dtype=int)
    if len(pos) != len(labeled_data):
        raise ValueError("labeled_positions and labeled_data differ in length")
    if any(y is None for y in labeled_data.labels):
        raise ValueError("labeled_data contains unlabeled rows")
    ids = list(source_ids) if source_ids is not None else list(range(len(pos)))
    layout = model.layout
    cands = generate_candidates(EncodedMatrix(x[pos], layout), mask[pos], cfg)
    src = cands.source

    if src.size:
        grown = inject_damaged_nodes(adj, x, mask, cands.damaged.values, cands.mask)
        x_all = np.vstack([x, cands.damaged.values])
        m_all = np.vstack([mask, cands.mask])
        l = propagation_operator(grown, with_self_loops=True)
        l_tilde = propagation_operator(grown, with_self_loops=False)
        generated = model.impute(x_all, m_all, l, l_tilde)[x.shape[0]:]
    else:
        grown = adj
        generated = np.zeros((0, layout.d))

    new_rows = decode(EncodedMatrix(generated, layout),
                      labels=[labeled_data.labels[i] for i in src])
    rows = [list(r) for r in labeled_data.rows] + new_rows.rows
    labels = list(labeled_data.labels) + new_rows.labels
    provenance = [ORIGINAL] * len(pos) + [ids[i] for i in src]
    out = TabularDataset(layout.schema, rows, labels)
    return AugmentedDataset(out, provenance, generated, cands, grown)
