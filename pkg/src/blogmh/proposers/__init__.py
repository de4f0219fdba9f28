"""Proposal distributions for the Metropolis-Hastings engine."""

from .base import Proposer, RepairError, forward_initial_state, instantiate, support_term, support_var
from .canopy import Canopy, build_canopies, jaccard, tokenize
from .generic import GenericResample
from .splitmerge import (Attributes, CitationSchema, Segmentation, SplitMerge, SplitMergeMove,
                         attribute_log_mass, segment_text)

__all__ = ["Proposer", "RepairError", "forward_initial_state", "instantiate", "support_term",
           "support_var", "GenericResample", "Canopy", "build_canopies", "jaccard", "tokenize",
           "SplitMerge", "SplitMergeMove", "CitationSchema", "Segmentation", "Attributes",
           "attribute_log_mass", "segment_text"]
