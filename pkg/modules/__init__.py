"""
Caption Engine Modules

Core packages:
- graphcore: reverse-mode differentiation over dense tensors
- attention: soft and hard attention over annotation grids
- decoder: LSTM decoder with deep output, generation and checkpoints
- training: soft and hard learning rules, optimizers, early stopping
- data: synthetic scene corpus and the annotation file format
- evalviz: BLEU, alignment scores and attention heatmaps
- verification: oracle suites for the verify command
"""
