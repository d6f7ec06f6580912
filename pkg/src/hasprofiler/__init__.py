"""HTTP adaptive streaming traffic profiling from IP-level metadata.

The package classifies packet flows as HAS vs non-HAS and estimates the
streaming client's playback buffer state (Filling / Steady / Depleting /
Unclear) per sampling period, using only packet timing, size and direction.
A built-in session simulator produces labeled ground-truth traces for
training and evaluation.
"""
from .errors import HasProfilerError
from .packets import (Direction, FlowKey, FlowState, PacketRecord, Protocol,
                      build_flows, direction_of, flow_key)
from .features import (BUFFER_CLASSES, FLOW_CLASSES, Dataset, FeatureVector,
                       WindowConfig, concat_datasets, extract_samples,
                       feature_vector)
from .traceio import (LabelInterval, TraceMeta, read_dataset_csv, read_labels,
                      read_packet_csv, read_pcap, write_dataset_csv,
                      write_labels, write_packet_csv)
from .learn import (ForestModel, KnnModel, TreeModel, knn_train, load_model,
                    oob_error, permutation_importance, save_model,
                    train_forest, train_tree)
from .evaluate import (ConfusionMatrix, CvReport, ModelSpec, benchmark,
                       confusion, cross_validate, kfold_split, predict_batch)
from .simulate import (LabeledTrace, NetworkProfile, SessionScript,
                       build_buffer_corpus, build_flow_corpus,
                       make_scenario_script, read_script, simulate_download,
                       simulate_has, simulate_web, write_script)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
