"""Federated graph statistics (k-stars, triangles) under edge differential privacy."""

from .graph import Graph, SplitConfig, SubgraphCollection, load_edge_list, split_federated
from .harness import ExperimentConfig, MetricsReport, bench_group_ops, emit_csv, read_csv, run_experiment
from .mechanisms import BudgetLedger, PrivacyBudget, split_budget
from .protocols import DeltaPolicy, ProtocolConfig, partition_nodes, run_baseline, run_feat, run_feat_plus, run_protocol
from .queries import QueryResult, QuerySpec

__version__ = "0.1.0"
