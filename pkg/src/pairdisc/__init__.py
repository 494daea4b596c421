"""Paraphrase generation with an LSTM encoder-decoder and a pairwise discriminator."""
__all__ = ["__version__"]

__version__ = "0.1.0"
