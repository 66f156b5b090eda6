"""Road-network microregion embeddings over a hexagonal spatial index."""

from .autoencoder import ModelParams, TrainConfig, encode, train
from .features import FeatureSchema, default_schema, encode_network
from .hexgrid import CellAssignment, assign_network, cells_of_segment
from .hexindex import CellId, cell_boundary, cell_center, cell_of_point
from .latent import embed_arithmetic, nearest_regions, pca_project, tsne_project
from .regions import RegionEmbedding, aggregate_mean, region_feature_share
from .roads import RoadNetwork, RoadSegment, filter_driveable, parse_road_collection

__version__ = "0.1.0"

__all__ = [
    "CellAssignment",
    "CellId",
    "FeatureSchema",
    "ModelParams",
    "RegionEmbedding",
    "RoadNetwork",
    "RoadSegment",
    "TrainConfig",
    "aggregate_mean",
    "assign_network",
    "cell_boundary",
    "cell_center",
    "cell_of_point",
    "cells_of_segment",
    "default_schema",
    "embed_arithmetic",
    "encode",
    "encode_network",
    "filter_driveable",
    "nearest_regions",
    "parse_road_collection",
    "pca_project",
    "region_feature_share",
    "train",
    "tsne_project",
]
