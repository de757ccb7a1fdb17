from lcvn.tokenizers.bins import BinSpec, action_to_bins, bin_name, bins_to_action
from lcvn.tokenizers.space import CONTROL_TOKENS, TokenSpace, load_tokenizers, save_tokenizers
from lcvn.tokenizers.vq import Codebook, train_codebook, vq_decode, vq_encode
from lcvn.tokenizers.words import WordTokenizer

__all__ = [
    "BinSpec",
    "CONTROL_TOKENS",
    "Codebook",
    "TokenSpace",
    "WordTokenizer",
    "action_to_bins",
    "bin_name",
    "bins_to_action",
    "load_tokenizers",
    "save_tokenizers",
    "train_codebook",
    "vq_decode",
    "vq_encode",
]
