"""Interpretable binary representations and combination extension.

Every instance, whatever its modality, is described by a vector of presence
bits over human-readable units (words, column bins, image segments).  The
combination extension appends one bit per chosen feature tuple that is set
exactly when all of the tuple's members are present.
"""
from __future__ import annotations

import itertools
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (DimensionMismatch, EmptyInstance, MissingContext,
                     OutOfRange, SchemaMismatch, SpecInvalid)

WORD = "word"
TABULAR_BIN = "tabular-bin"
IMAGE_SEGMENT = "image-segment"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class FeatureUnit:
    index: int
    kind: str
    label: str
    payload: tuple


@dataclass(frozen=True)
class BinaryRepr:
    bits: np.ndarray
    units: tuple
    instance_ref: str = ""

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "units", tuple(self.units))
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("bits must be a non-empty vector")
        if len(self.units) != bits.size:
            raise ValueError("bits and units differ in length")
        if np.any(bits > 1):
            raise ValueError("bits must be 0/1")
        for i, u in enumerate(self.units):
            if u.index != i:
                raise ValueError("unit indices must run 0..d-1")
            if not u.label:
                raise ValueError("unit labels must be non-empty")

    @property
    def d(self):
        return int(self.bits.size)

    def with_bits(self, bits):
        return BinaryRepr(bits, self.units, self.instance_ref)


@dataclass(frozen=True)
class CombinationSpec:
    """Spans (combination sizes) and focus indices for the extension.

    ``focus=None`` means "choose automatically": the explainer substitutes the
    features picked by a plain sparse fit before extending.
    """

    spans: tuple = (2,)
    focus: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(int(b) for b in self.spans))
        if self.focus is not None:
            object.__setattr__(self, "focus", tuple(int(i) for i in self.focus))

    def validate(self, d=None):
        if self.focus is None:
            raise SpecInvalid("focus indices must be resolved before use")
        lam = len(self.focus)
        if len(set(self.spans)) != len(self.spans):
            raise SpecInvalid(f"duplicate spans in {self.spans}")
        if len(set(self.focus)) != lam:
            raise SpecInvalid(f"duplicate focus indices in {self.focus}")
        for i in self.focus:
            if i < 0 or (d is not None and i >= d):
                raise SpecInvalid(f"focus index {i} outside 0..{d - 1 if d else '?'}")
        if lam == 0:
            return
        for b in self.spans:
            if not 2 <= b <= lam:
                raise SpecInvalid(f"span {b} outside [2, {lam}]")

    @property
    def length(self):
        if self.focus is None:
            raise SpecInvalid("focus indices must be resolved before use")
        lam = len(self.focus)
        if lam == 0:
            return 0
        return sum(math.comb(lam, b) for b in self.spans)


@dataclass(frozen=True)
class ExtendedRepr:
    base: BinaryRepr
    ext_bits: np.ndarray
    combos: tuple

    @property
    def bits(self):
        """Base bits followed by extension bits (width d + l)."""
        return np.concatenate([self.base.bits, self.ext_bits])


def enumerate_combinations(spec):
    """Index tuples for every extension column, spans first then lexicographic."""
    spec.validate()
    if not spec.focus:
        return []
    combos = []
    for b in spec.spans:
        combos.extend(itertools.combinations(spec.focus, b))
    return combos


def extension_matrix(masks, combos):
    """AND of the member columns of ``masks`` for each combo -> (n, l) uint8."""
    masks = np.asarray(masks)
    n = masks.shape[0]
    out = np.ones((n, len(combos)), dtype=np.uint8)
    for j, combo in enumerate(combos):
        col = out[:, j]
        for item in combo:
            col &= masks[:, item]
    return out


def extend_with_combinations(p, spec):
    if not isinstance(p, BinaryRepr):
        raise TypeError("expected a BinaryRepr")
    spec.validate(p.d)
    combos = tuple(enumerate_combinations(spec))
    ext = extension_matrix(p.bits[None, :], combos)[0]
    ext.setflags(write=False)
    return ExtendedRepr(p, ext, combos)


def combo_label(units, combo):
    return " AND ".join(units[i].label for i in combo)


# -- text -------------------------------------------------------------------

def tokenize(text):
    """Split on whitespace and punctuation; returns ``(token, start, end)``."""
    return [(m.group().casefold(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def build_text_repr(text, instance_ref=""):
    tokens = tokenize(text)
    if not tokens:
        raise EmptyInstance("no tokens in text instance")
    spans = {}
    for tok, start, end in tokens:
        spans.setdefault(tok, []).append((start, end))
    units = [FeatureUnit(i, WORD, tok, tuple(sp)) for i, (tok, sp) in enumerate(spans.items())]
    return BinaryRepr(np.ones(len(units), dtype=np.uint8), units, instance_ref)


class TextReconstructor:
    """Rebuilds strings with the tokens of zeroed units removed.

    The original text is viewed as ``g0 t0 g1 t1 ... g_n``.  A kept token is
    emitted with the whitespace that preceded it, except the first kept token,
    which takes the leading whitespace ``g0``.
    """

    def __init__(self, text, x_repr):
        self.text = text
        occ = []
        for unit in x_repr.units:
            for start, end in unit.payload:
                occ.append((start, end, unit.index))
        occ.sort()
        self.tokens = [text[s:e] for s, e, _ in occ]
        self.owner = np.array([u for _, _, u in occ], dtype=np.int64)
        gaps = []
        prev = 0
        for s, e, _ in occ:
            gaps.append(text[prev:s])
            prev = e
        self.gaps = gaps
        self.tail = text[prev:]
        self.head = gaps[0] if gaps else ""

    def __call__(self, bits):
        bits = np.asarray(bits)
        if bits.all():
            return self.text
        keep = np.flatnonzero(bits[self.owner])
        if keep.size == 0:
            return self.head + self.tail
        parts = [self.head, self.tokens[keep[0]]]
        for k in keep[1:]:
            parts.append(self.gaps[k])
            parts.append(self.tokens[k])
        parts.append(self.tail)
        return "".join(parts)


# -- tabular ----------------------------------------------------------------

NUMERIC = "numeric"
CATEGORICAL = "categorical"


def quartile_edges(values):
    """Interior quartile boundaries (linear interpolation on the sorted sample)."""
    return np.quantile(np.asarray(values, dtype=float), [0.25, 0.5, 0.75])


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    edges: tuple = ()
    categories: tuple = ()

    @property
    def n_bins(self):
        if self.kind == CATEGORICAL:
            return len(self.categories)
        return max(len(self.edges) - 1, 1)

    def bin_of(self, value):
        """Bin index for ``value``; values on an edge go to the upper bin."""
        if self.kind == CATEGORICAL:
            try:
                return self.categories.index(str(value))
            except ValueError:
                raise SchemaMismatch(f"{self.name}: unknown category {value!r}") from None
        v = float(value)
        lo, hi = self.edges[0], self.edges[-1]
        if v < lo or v > hi:
            warnings.warn(f"{self.name}={v} outside training range [{lo}, {hi}]",
                          OutOfRange, stacklevel=3)
            return 0 if v < lo else self.n_bins - 1
        idx = int(np.searchsorted(self.edges, v, side="right")) - 1
        return min(idx, self.n_bins - 1)

    def bin_label(self, b):
        if self.kind == CATEGORICAL:
            return f"{self.name}={self.categories[b]}"
        if len(self.edges) == 1:
            return f"{self.name}={_fmt(self.edges[0])}"
        lo, hi = self.edges[b], self.edges[b + 1]
        close = "]" if b == self.n_bins - 1 else ")"
        return f"{self.name} ∈ [{_fmt(lo)}, {_fmt(hi)}{close}"


def _fmt(x):
    return f"{x:g}"


@dataclass(frozen=True)
class TabularSchema:
    columns: tuple

    @property
    def names(self):
        return [c.name for c in self.columns]

    @classmethod
    def from_training(cls, rows, names, kinds):
        """Quartile bins for numeric columns, observed values for categorical."""
        cols = []
        data = list(zip(*rows)) if rows else [[] for _ in names]
        for name, kind, values in zip(names, kinds, data):
            if kind == NUMERIC:
                arr = np.asarray(values, dtype=float)
                edges = np.unique(np.concatenate([[arr.min()], quartile_edges(arr), [arr.max()]]))
                cols.append(ColumnSpec(name, NUMERIC, edges=tuple(float(e) for e in edges)))
            elif kind == CATEGORICAL:
                cols.append(ColumnSpec(name, CATEGORICAL, categories=tuple(sorted({str(v) for v in values}))))
            else:
                raise ValueError(f"unknown column kind {kind!r}")
        return cls(tuple(cols))

    def to_json(self):
        cols = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind}
            if c.kind == NUMERIC:
                entry["edges"] = list(c.edges)
            else:
                entry["categories"] = list(c.categories)
            cols.append(entry)
        return json.dumps({"columns": cols}, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        cols = []
        for entry in doc["columns"]:
            if entry["kind"] == NUMERIC:
                edges = tuple(float(e) for e in entry["edges"])
                if any(b <= a for a, b in zip(edges, edges[1:])):
                    raise SchemaMismatch(f"{entry['name']}: edges must be strictly increasing")
                cols.append(ColumnSpec(entry["name"], NUMERIC, edges=edges))
            else:
                cols.append(ColumnSpec(entry["name"], CATEGORICAL,
                                       categories=tuple(str(c) for c in entry["categories"])))
        return cls(tuple(cols))

    def row_values(self, row):
        """Normalize a mapping or sequence into a list in schema column order."""
        if isinstance(row, dict):
            missing = [n for n in self.names if n not in row]
            extra = [k for k in row if k not in self.names]
            if missing or extra:
                raise SchemaMismatch(f"missing columns {missing}, extra columns {extra}")
            return [row[n] for n in self.names]
        row = list(row)
        if len(row) != len(self.columns):
            raise SchemaMismatch(f"expected {len(self.columns)} values, got {len(row)}")
        return row


def build_tabular_repr(row, schema, instance_ref=""):
    values = schema.row_values(row)
    units = []
    for i, (col, v) in enumerate(zip(schema.columns, values)):
        b = col.bin_of(v)
        units.append(FeatureUnit(i, TABULAR_BIN, col.bin_label(b), (i, b)))
    return BinaryRepr(np.ones(len(units), dtype=np.uint8), units, instance_ref)


class TabularReconstructor:
    """Replaces zeroed columns by a training value drawn from a different bin."""

    def __init__(self, row, x_repr, schema, training_rows):
        self.values = schema.row_values(row)
        self.pools = []
        train_cols = list(zip(*training_rows)) if training_rows else []
        for (col_idx, b), col in zip((u.payload for u in x_repr.units), schema.columns):
            if not train_cols:
                self.pools.append(None)
                continue
            pool = [v for v in train_cols[col_idx] if _quiet_bin(col, v) != b]
            self.pools.append(pool or None)

    def __call__(self, bits, rng):
        out = list(self.values)
        for j in np.flatnonzero(np.asarray(bits) == 0):
            pool = self.pools[j]
            if pool is None:
                raise MissingContext(f"no training values outside the instance's bin for column {j}")
            out[j] = pool[int(rng.integers(len(pool)))]
        return out


def _quiet_bin(col, v):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfRange)
        return col.bin_of(v)


# -- image ------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentMap:
    ids: np.ndarray
    n_segments: int = field(default=0)

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        if ids.ndim != 2:
            raise DimensionMismatch("segment map must be 2-D")
        present = np.unique(ids)
        if present[0] != 0 or present[-1] != present.size - 1:
            raise SpecInvalid("segment ids must be contiguous from 0")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "n_segments", int(present.size))

    @property
    def height(self):
        return self.ids.shape[0]

    @property
    def width(self):
        return self.ids.shape[1]


def grid_segments(height, width, rows, cols):
    """Regular grid; the last row/column absorbs any remainder."""
    if rows < 1 or cols < 1 or rows > height or cols > width:
        raise DimensionMismatch(f"cannot split {height}x{width} into {rows}x{cols}")
    r = np.minimum(np.arange(height) // (height // rows), rows - 1)
    c = np.minimum(np.arange(width) // (width // cols), cols - 1)
    return SegmentMap(r[:, None] * cols + c[None, :])


def build_image_repr(image, segments, instance_ref=""):
    image = np.asarray(image)
    h, w = image.shape[:2]
    if not isinstance(segments, SegmentMap):
        rows, cols = segments
        segments = grid_segments(h, w, rows, cols)
    if (segments.height, segments.width) != (h, w):
        raise DimensionMismatch(
            f"segment map {segments.height}x{segments.width} vs image {h}x{w}")
    units = [FeatureUnit(s, IMAGE_SEGMENT, f"segment {s}", (s,)) for s in range(segments.n_segments)]
    return BinaryRepr(np.ones(len(units), dtype=np.uint8), units, instance_ref), segments


class ImageReconstructor:
    """Fills zeroed segments with their per-channel mean colour (half-up rounding)."""

    def __init__(self, image, segments):
        self.image = np.asarray(image)
        self.ids = segments.ids
        flat = self.image.reshape(self.ids.size, -1).astype(np.float64)
        ids = self.ids.ravel()
        counts = np.bincount(ids, minlength=segments.n_segments).astype(np.float64)
        means = np.stack([np.bincount(ids, weights=flat[:, ch], minlength=segments.n_segments)
                          for ch in range(flat.shape[1])], axis=1) / counts[:, None]
        fill = np.floor(means + 0.5).astype(self.image.dtype)
        self.filled = fill[ids].reshape(self.image.shape)

    def __call__(self, bits):
        bits = np.asarray(bits)
        if bits.all():
            return self.image.copy()
        keep = bits.astype(bool)[self.ids]
        if self.image.ndim == 3:
            keep = keep[:, :, None]
        return np.where(keep, self.image, self.filled)


def reconstruct(instance, p, context=None, rng=None):
    """Map a perturbed binary vector back to a raw instance.

    ``context`` depends on the modality: ``None`` for text, ``(schema,
    training_rows)`` for tabular and a :class:`SegmentMap` for images.
    """
    kind = p.units[0].kind
    if kind == WORD:
        x_repr = build_text_repr(instance, p.instance_ref)
        return TextReconstructor(instance, x_repr)(p.bits)
    if kind == TABULAR_BIN:
        if context is None:
            raise MissingContext("tabular reconstruction needs (schema, training_rows)")
        schema, training_rows = context
        x_repr = build_tabular_repr(instance, schema, p.instance_ref)
        if rng is None:
            rng = np.random.default_rng(0)
        return TabularReconstructor(instance, x_repr, schema, training_rows)(p.bits, rng)
    if kind == IMAGE_SEGMENT:
        if context is None:
            raise MissingContext("image reconstruction needs a SegmentMap")
        return ImageReconstructor(instance, context)(p.bits)
    raise ValueError(f"unknown unit kind {kind!r}")


def as_masks(samples: Sequence[BinaryRepr]):
    return np.stack([s.bits for s in samples])
