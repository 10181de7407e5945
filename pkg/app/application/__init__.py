"""Application layer: Raman solver, loss-model fitting, NLI evaluation and stage orchestration."""
