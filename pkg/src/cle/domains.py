"""Per-modality glue between raw instances and their binary representation."""
import numpy as np

from .representation import (ImageReconstructor, SegmentMap, TabularReconstructor,
                             TextReconstructor, build_image_repr, build_tabular_repr,
                             build_text_repr)


class TextDomain:
    modality = "text"
    default_metric = "cosine"

    def represent(self, instance, instance_ref=""):
        return build_text_repr(instance, instance_ref)

    def reconstructor(self, instance, x_repr):
        rebuild = TextReconstructor(instance, x_repr)
        return lambda bits, rng: rebuild(bits)

    def unit_key(self, unit):
        return unit.label


class TabularDomain:
    modality = "tabular"
    default_metric = "euclidean-normalized"

    def __init__(self, schema, training_rows):
        self.schema = schema
        self.training_rows = [self.schema.row_values(r) for r in training_rows]

    def represent(self, instance, instance_ref=""):
        return build_tabular_repr(instance, self.schema, instance_ref)

    def reconstructor(self, instance, x_repr):
        return TabularReconstructor(instance, x_repr, self.schema, self.training_rows)

    def unit_key(self, unit):
        return self.schema.columns[unit.payload[0]].name


class ImageDomain:
    """``segments`` is a SegmentMap or a ``(rows, cols)`` grid spec."""

    modality = "image"
    default_metric = "cosine"

    def __init__(self, segments=(4, 4)):
        self.segments = segments
        self._last = None

    def represent(self, instance, instance_ref=""):
        x_repr, seg = build_image_repr(instance, self.segments, instance_ref)
        self._last = seg
        return x_repr

    def segment_map(self, instance):
        if isinstance(self.segments, SegmentMap):
            return self.segments
        return build_image_repr(instance, self.segments)[1]

    def reconstructor(self, instance, x_repr):
        rebuild = ImageReconstructor(instance, self.segment_map(instance))
        return lambda bits, rng: rebuild(bits)

    def unit_key(self, unit):
        return unit.payload[0]


def domain_for(modality, **kwargs):
    if modality == "text":
        return TextDomain()
    if modality == "tabular":
        return TabularDomain(kwargs["schema"], kwargs["training_rows"])
    if modality == "image":
        return ImageDomain(kwargs.get("segments", (4, 4)))
    raise ValueError(f"unknown modality {modality!r}")


def reconstruct_many(rebuild, masks, rng):
    return [rebuild(row, rng) for row in np.asarray(masks)]
