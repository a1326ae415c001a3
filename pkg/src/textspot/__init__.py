"""Desk-scale transcription-supervised scene-text spotting lab.

Text queries attend into image embeddings; locations emerge from the
attention activation maps and are refined coarse-to-fine. Training is
supervised by transcriptions alone, matched to predictions with a
Hungarian assignment. The package also ships the synthetic data
generator, evaluation metrics, curriculum scheduler, and annotation
tooling (typed and audio) used to exercise the pipeline end to end.
"""

__version__ = "0.1.0"
