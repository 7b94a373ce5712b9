"""Unsupervised object-category discovery and self-trained segmentation.

The pipeline: threshold saliency maps into object proposals, cluster the
proposals' feature vectors with spectral clustering, filter the least
certain cluster members, paint cluster ids into the proposal masks as
pseudo-labels, bootstrap a per-pixel classifier by iterative self-training,
and evaluate against ground truth with Hungarian matching or majority
voting over dataset-level IoU.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, EigenSolverError, EmptyProposalError,
                     EvaluationError, ExternalTrainerError, GraphError,
                     ManifestError, MaskFormatError, TensorFormatError,
                     TrainingError, UnsupsegError)
from .tensorio import read_feature_tensor, write_feature_tensor
from .maskio import IGNORE_LABEL, read_mask, validate_labels, write_mask
from .manifest import DatasetManifest, ManifestEntry, load_manifest, write_manifest
from .proposals import (BBox, CropSpec, ProposalRecord, SkipRecord,
                        binarize_saliency, build_proposals, make_crop_spec,
                        tight_bbox)
from .graph import AffinityGraph, build_knn_affinity
from .spectral import SpectralEmbedding, normalized_laplacian, spectral_embed
from .kmeans import ClusterModel, cluster_kmeans, normalize_rows
from .discovery import (build_cluster_report, filter_uncertain,
                        synthesize_pseudo_masks)
from .selftrain import (HeadModel, TrainConfig, predict_masks,
                        resize_mask_nearest, self_train_round, softmax_xent,
                        train_head)
from .external import ExternalTrainerContract, run_external_trainer
from .evaluate import (EvalReport, Matching, OverlapTable, accumulate_overlaps,
                       format_text_report, hungarian_match, majority_vote,
                       matched_class_iou, report, spearman_size_iou,
                       transfer_remap)
from .config import RunConfig, apply_overrides, load_config
