"""Toolkit for measuring how learnable and describable image groupings are.

Builds forced-choice studies from a clustering, serves them to annotators,
scores the recorded judgments (exact binomial intervals, inter-rater
agreement), and distills one class-level description per cluster from
per-image captions.
"""

__version__ = "0.1.0"
