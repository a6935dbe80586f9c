"""Temporal dataset-shift evaluation for clinical time-series prediction.

Synthetic ICU cohorts with record-system vocabulary switches, four hourly
feature representations, LR / RF classifiers and year-aware training regimes.
"""

__version__ = "0.1.0"
