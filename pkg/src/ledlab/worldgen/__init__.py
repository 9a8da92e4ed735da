"""Synthetic buildings, scripted Observer episodes and template dialogs."""
from .catalog import load_catalog
from .dataset import DatasetConfig, build_splits, dataset_stats, generate_dataset, split_counts
from .environment import (DOOR, WALL, Door, Environment, FloorPlan, NavNode, ObjectPlacement, Room,
                          WorldParams, generate_environment)
from .episodes import (Episode, Message, PolicyParams, sample_start_locations, script_episode,
                       validate_episode)
from .io import load_environment, load_environments, read_episodes, save_environment, write_episodes
from .render import render_topdown

__all__ = [
    "DOOR", "WALL", "DatasetConfig", "Door", "Environment", "Episode", "FloorPlan", "Message",
    "NavNode", "ObjectPlacement", "PolicyParams", "Room", "WorldParams", "build_splits",
    "dataset_stats", "generate_dataset", "generate_environment", "load_catalog", "load_environment",
    "load_environments", "read_episodes", "render_topdown", "sample_start_locations",
    "save_environment", "script_episode", "split_counts", "validate_episode", "write_episodes",
]
