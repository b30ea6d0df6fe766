"""Cost-aware scheduling for LLM query workloads.

Routes batches of queries across multiple model endpoints using an adaptive
semantic cache, learned success/cost predictors, and a periodic feedback
loop, and ships a deterministic rolling-horizon simulator plus CLI for
running reproducible experiments against mock providers.
"""

__version__ = "0.1.0"
