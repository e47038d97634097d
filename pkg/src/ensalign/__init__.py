"""Ensemble forced alignment with order-statistic confidence intervals."""

from .acoustic import (
    ClassInventory,
    FrameClassifier,
    LogProbMatrix,
    load_prob_matrix,
    make_ensemble,
    score_frames,
    train_classifier,
)
from .aligner import Alignment, LabelSequence, align, align_oracle, enumerate_paths
from .ensemble import BoundarySample, EnsembleAlignment, aggregate, coverage_of
from .evaluation import BoundarySeq, ErrorReport, adjusted, dtw_error, paired_error
from .features import AudioBuffer, FeatureConfig, FeatureMatrix, mfcc, read_wav
from .lexicon import Lexicon, Transcript, build_pseudo_lexicon, expand_transcript, parse_dictionary
from .textgrid import IntervalTier, Point, PointTier, TextGrid, parse_textgrid, render

__version__ = "0.1.0"
