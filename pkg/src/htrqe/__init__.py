"""Ground-truth-free quality estimation for HTR/OCR output.

Scores recognized text against reference-corpus resources (lexicon,
character n-gram sets, an n-gram language model, an external
masked-LM scorer), ranks competing recognition models, and validates
the rankings against reference character error rates.
"""

__version__ = "0.1.0"
