"""Draws plus per-row metadata, shared by the samplers and the projector."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class SampleBatch:
    points: np.ndarray  # (N, n)
    names: tuple[str, ...]
    meta: Mapping[str, np.ndarray] = field(default_factory=dict)
    summary: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, len(self.names))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "names", tuple(self.names))
        meta = {}
        for key, col in self.meta.items():
            col = np.array(col)
            if col.shape[0] != pts.shape[0]:
                raise ValueError(f"meta column {key!r} has {col.shape[0]} rows, points have {pts.shape[0]}")
            col.setflags(write=False)
            meta[key] = col
        object.__setattr__(self, "meta", MappingProxyType(meta))
        object.__setattr__(self, "summary", MappingProxyType(dict(self.summary)))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return len(self.names)

    @classmethod
    def empty(cls, names: Sequence[str], meta_keys: Sequence[str] = (), summary=None) -> "SampleBatch":
        return cls(np.empty((0, len(names))), tuple(names), {k: np.empty(0) for k in meta_keys}, summary or {})

    def with_points(self, points, names: Sequence[str] | None = None) -> "SampleBatch":
        return replace(self, points=points, names=tuple(names) if names is not None else self.names)

    def with_meta(self, **cols) -> "SampleBatch":
        meta = dict(self.meta)
        meta.update(cols)
        return replace(self, meta=meta)

    def with_summary(self, **items) -> "SampleBatch":
        summary = dict(self.summary)
        summary.update(items)
        return replace(self, summary=summary)
