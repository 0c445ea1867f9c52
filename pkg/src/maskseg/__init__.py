"""maskseg: volumetric instance segmentation from overlapping central
instance masks, via evidence-weighted affinity aggregation and
signed-graph partitioning."""

from .aggregation import WelfordAccumulator, aggregate_affinities, baseline_affinities
from .codec import (
    CodecMaskProvider,
    LinearMaskCodec,
    codec_provider,
    decode,
    encode,
    fit_codec,
    read_codec,
    write_codec,
)
from .core import (
    DEFAULT_WINDOW,
    GRID_NEIGHBORHOOD,
    NEIGHBORHOOD_PRESETS,
    SCALE_PRESETS,
    SHORT_NEIGHBORHOOD,
    AffinityNeighborhood,
    Coord3,
    LabelVolume,
    MaskWindow,
    Scale,
    SignedGridGraph,
    edge_count,
    enumerate_edges,
)
from .errors import (
    ComputeError,
    ContainerError,
    MalformedHeaderError,
    MasksegError,
    PayloadLengthError,
    UnsupportedDtypeError,
    ValidationError,
)
from .io import (
    read_container,
    read_graph,
    read_mask_field,
    read_volume,
    write_container,
    write_graph,
    write_mask_field,
    write_volume,
)
from .masks import (
    CentralInstanceMask,
    FileMaskProvider,
    MaskProvider,
    NoiseConfig,
    NoisyMaskProvider,
    OracleMaskProvider,
    boundary_near_map,
    file_provider,
    gt_mask,
    gt_mask_field,
    perturb,
    single_pixel_mask,
)
from .metrics import adapted_rand_error, cremi_score, evaluation_report, fuzzy_dice, voi
from .partition import PartitionConfig, gasp_average, mutex_watershed, remove_small_segments
from .synth import generate_labels

__version__ = "0.1.0"

__all__ = [
    "AffinityNeighborhood",
    "CentralInstanceMask",
    "CodecMaskProvider",
    "ComputeError",
    "ContainerError",
    "Coord3",
    "DEFAULT_WINDOW",
    "FileMaskProvider",
    "GRID_NEIGHBORHOOD",
    "LabelVolume",
    "LinearMaskCodec",
    "MalformedHeaderError",
    "MaskProvider",
    "MaskWindow",
    "MasksegError",
    "NEIGHBORHOOD_PRESETS",
    "NoiseConfig",
    "NoisyMaskProvider",
    "OracleMaskProvider",
    "PartitionConfig",
    "PayloadLengthError",
    "SCALE_PRESETS",
    "SHORT_NEIGHBORHOOD",
    "Scale",
    "SignedGridGraph",
    "UnsupportedDtypeError",
    "ValidationError",
    "WelfordAccumulator",
    "adapted_rand_error",
    "aggregate_affinities",
    "baseline_affinities",
    "boundary_near_map",
    "codec_provider",
    "cremi_score",
    "decode",
    "edge_count",
    "encode",
    "enumerate_edges",
    "evaluation_report",
    "file_provider",
    "fit_codec",
    "fuzzy_dice",
    "gasp_average",
    "generate_labels",
    "gt_mask",
    "gt_mask_field",
    "mutex_watershed",
    "perturb",
    "read_codec",
    "read_container",
    "read_graph",
    "read_mask_field",
    "read_volume",
    "remove_small_segments",
    "single_pixel_mask",
    "voi",
    "write_codec",
    "write_container",
    "write_graph",
    "write_mask_field",
    "write_volume",
]
