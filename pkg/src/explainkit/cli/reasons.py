"""Reason codes: the features pushing a prediction hardest toward the adverse outcome."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class ReasonCode:
    rank: int
    feature: str
    observed_value: float
    phi: float
    direction: str
    text: str

    def to_dict(self) -> dict:
        return asdict(self)


def load_codebook(path) -> dict:
    """JSON object mapping feature name to {raw value: description}."""
    try:
        book = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read codebook {path}: {exc}") from exc
    if not isinstance(book, dict) or not all(isinstance(v, dict) for v in book.values()):
        raise DataError("codebook must map feature names to objects of value descriptions")
    return book


def format_value(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else f"{v:g}"


def reason_codes(explanation, x, names, k: int = 3, codebook: Optional[dict] = None):
    """Top-k features by positive contribution.

    Returns ``(codes, short)`` where ``short`` is True when fewer than k
    features have a positive contribution.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    phi = np.asarray(explanation.phi, dtype=float)
    x = np.asarray(x, dtype=float)
    pos = np.flatnonzero(phi > 0)
    order = pos[np.argsort(-phi[pos], kind="stable")][:k]
    codes = []
    for rank, j in enumerate(order, start=1):
        shown = format_value(x[j])
        if codebook and names[j] in codebook:
            label = codebook[names[j]].get(shown)
            if label is not None:
                shown = f"{shown} ({label})"
        text = f"feature {names[j]} is {shown} (contribution {phi[j]:+.4g})"
        codes.append(ReasonCode(rank, names[j], float(x[j]), float(phi[j]), "increases", text))
    return codes, len(codes) < k
