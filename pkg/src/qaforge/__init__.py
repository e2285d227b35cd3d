"""qaforge: synthetic adversarial QA data generation and evaluation.

Generate, filter, and relabel synthetic question-answer pairs over text
passages; schedule two-stage fine-tuning of pluggable QA backends; and
measure robustness against live human adversaries via validated model
error rates.
"""

__version__ = "0.1.0"

from . import answers, backends, corpus, filters, metrics, orchestrator, qgen

__all__ = ["answers", "backends", "corpus", "filters", "metrics", "orchestrator", "qgen", "__version__"]
