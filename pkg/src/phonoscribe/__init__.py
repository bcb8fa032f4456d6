"""Audio-to-IPA transcription for single French words, plus corpus auditing."""

__version__ = "0.1.0"

from .ipa import INVENTORY, Phoneme, PhonemeSeq, render_ipa, tokenize_ipa

__all__ = [
    "INVENTORY",
    "Phoneme",
    "PhonemeSeq",
    "render_ipa",
    "tokenize_ipa",
    "__version__",
]
