"""Shortest-path synthesis: hidden graphs, datasets, model, baseline."""

from .baseline import dp_baseline, observed_edges
from .seqmodel import PathConfig, PathModel, train_path_model
from .world import (
    PathWorld,
    build_dataset,
    dijkstra,
    evaluate_paths,
    generate_world,
    load_world,
    save_world,
)

__all__ = [
    "PathWorld",
    "PathConfig",
    "PathModel",
    "build_dataset",
    "dijkstra",
    "dp_baseline",
    "evaluate_paths",
    "generate_world",
    "load_world",
    "observed_edges",
    "save_world",
    "train_path_model",
]
