"""Python bindings for the gridcascade detection-refinement library."""

from ._core import (
    BBox,
    ImageBounds,
    average_precision,
    clip,
    config_hash,
    default_config,
    expand,
    fused_score,
    generate_scene,
    iou,
    nms,
    roundtrip_box,
    run_experiment,
)

__all__ = [
    "BBox",
    "ImageBounds",
    "average_precision",
    "clip",
    "config_hash",
    "default_config",
    "expand",
    "fused_score",
    "generate_scene",
    "iou",
    "nms",
    "roundtrip_box",
    "run_experiment",
]
