"""Graph-MLP node classification in numpy.

A pure MLP is trained on node features; graph structure enters only
through a neighboring contrastive loss on the hidden embedding, so
inference never touches the adjacency. A two-layer GCN sharing the same
building blocks is included as the message-passing baseline.
"""

from .graph import (Graph, Splits, build_adjacency, corrupt_adjacency, extract_submatrix,
                    normalize_adjacency, sparse_power)
from .ingest import (load_canonical, load_dataset, load_linqs_content_cites, load_pubmed_tab,
                     make_planetoid_splits, save_canonical)
from .loss import combined_loss, cosine_sim_matrix, ncontrast_loss, softmax_cross_entropy
from .nn import GcnModel, GraphMlpModel, init_params, load_checkpoint, save_checkpoint
from .optim import Adam
from .tensor import Rng, grad_check, matmul
from .train import TrainConfig, TrainResult, evaluate, sample_batch, train

__version__ = "0.1.0"
