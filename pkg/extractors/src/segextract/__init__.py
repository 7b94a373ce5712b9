"""Adapters from pretrained vision models to the engine's file formats."""

__version__ = "0.1.0"

from .backbones import Backbone, BackboneError, ToyViT, load_backbone, load_image_rgb
from .extract import (ExtractionReport, extract_dense_features,
                      extract_proposal_features, extract_saliency,
                      read_engine_manifest)
from .ftn1 import read_ftn1, write_ftn1
from .saliency import SaliencyError, SaliencyModel, load_saliency_model
