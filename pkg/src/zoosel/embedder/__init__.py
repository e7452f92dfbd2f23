from zoosel.embedder.corpus import (
    SegmentPool,
    build_transfer_targets,
    pool_from_arrays,
    pool_from_series,
    pool_from_tasks,
    transfer_matrix,
)
from zoosel.embedder.losses import (
    TransferTargets,
    loss_contrastive,
    loss_reconstruction,
    loss_transfer,
    make_masks,
)
from zoosel.embedder.network import (
    Extractor,
    ExtractorConfig,
    embed,
    extractor_from_bytes,
    load_extractor,
    param_count,
    param_layout,
    save_extractor,
)
from zoosel.embedder.train import NonFiniteLossError, TrainResult, total_loss, train

__all__ = [
    "Extractor",
    "ExtractorConfig",
    "NonFiniteLossError",
    "SegmentPool",
    "TrainResult",
    "TransferTargets",
    "build_transfer_targets",
    "embed",
    "extractor_from_bytes",
    "load_extractor",
    "loss_contrastive",
    "loss_reconstruction",
    "loss_transfer",
    "make_masks",
    "param_count",
    "param_layout",
    "pool_from_arrays",
    "pool_from_series",
    "pool_from_tasks",
    "save_extractor",
    "total_loss",
    "train",
    "transfer_matrix",
]
