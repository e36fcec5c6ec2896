"""Federated learning simulator with layer-wise update aggregation and recycling."""

__version__ = "0.1.0"

from .accounting import CommLedger, comm_normalized_cost, memory_footprint_model
from .client_trainer import LocalUpdate, LocalUpdateRule, local_loss_eval, local_train
from .config import ExperimentConfig, load_config, parse_config
from .data_gen import ClientShard, Dataset, dirichlet_partition, generate_synthetic
from .luar_core import (RecyclerState, compose_dropping_update, compose_global_update,
                        compute_scores, measure_noise, sample_recycle_set,
                        selection_probabilities)
from .nn_core import LayerKeyedVector, LayerSpec, Network, layer_norms
from .orchestrator import RoundRecord, build_federation, run_experiment, run_round

__all__ = [
    "ClientShard", "CommLedger", "Dataset", "ExperimentConfig", "LayerKeyedVector",
    "LayerSpec", "LocalUpdate", "LocalUpdateRule", "Network", "RecyclerState", "RoundRecord",
    "build_federation", "comm_normalized_cost", "compose_dropping_update",
    "compose_global_update", "compute_scores", "dirichlet_partition", "generate_synthetic",
    "layer_norms", "load_config", "local_loss_eval", "local_train", "measure_noise",
    "memory_footprint_model", "parse_config", "run_experiment", "run_round",
    "sample_recycle_set", "selection_probabilities",
]
