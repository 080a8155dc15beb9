"""Hospitalization-risk modelling over Synthea-style EHR exports.

Pipeline stages live in submodules: :mod:`.ingest` (CSV tables),
:mod:`.cohort` (windowed features and labels), :mod:`.models` (four
from-scratch classifiers), :mod:`.evaluation` (splits, grid search, metrics,
correlation and importance), :mod:`.roi` (preventive-care return on
investment), :mod:`.synthgen` (corpus generator with ground-truth manifest)
and :mod:`.cli`.
"""

__version__ = "0.1.0"
