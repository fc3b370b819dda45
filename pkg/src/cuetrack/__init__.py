"""Multi-cue association engine for open-vocabulary multi-object tracking."""
