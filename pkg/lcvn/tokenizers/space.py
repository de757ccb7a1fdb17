"""Unified token id space: control tokens, words, action bins (plus stop), visual codes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import torch

from lcvn.datagen.vocabulary import VOCABULARY
from lcvn.errors import TokenizerError
from lcvn.infra.checkpoint import load_checkpoint, save_checkpoint
from lcvn.tokenizers.bins import DIMENSIONS, BinSpec
from lcvn.tokenizers.vq import Codebook
from lcvn.tokenizers.words import WordTokenizer

CONTROL_TOKENS: Tuple[str, ...] = (
    "<pad>",
    "<bos>",
    "<eos>",
    "<task>",
    "<instr>",
    "<start_obs>",
    "<cur_obs>",
    "<cur_action>",
    "<pred_action>",
    "<move>",
    "<pred_obs>",
)


@dataclass(frozen=True)
class TokenSpace:
    """
    Contiguous, disjoint id ranges laid out in this order: control, text,
    dx, dy, dyaw, stop, visual. ``token_starts`` maps each range to its first id.
    """

    codebook_size: int
    resolution: float = 0.01
    max_index: int = 50
    vocabulary: Tuple[str, ...] = VOCABULARY
    words: WordTokenizer = field(init=False, compare=False)
    bins: BinSpec = field(init=False, compare=False)
    token_starts: Dict[str, int] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if self.codebook_size < 1:
            raise TokenizerError(f"codebook_size must be >= 1, got {self.codebook_size}")
        text_start = len(CONTROL_TOKENS)
        words = WordTokenizer(tuple(self.vocabulary), base=text_start)
        bins = BinSpec(self.resolution, self.max_index, base=text_start + len(words))
        starts = {"control": 0, "text": text_start}
        for dim in DIMENSIONS:
            starts[dim] = bins.offsets[dim]
        starts["stop"] = bins.stop_token
        starts["visual"] = bins.stop_token + 1
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "token_starts", starts)

    @property
    def vocab_size(self) -> int:
        return self.token_starts["visual"] + self.codebook_size

    def ranges(self) -> Dict[str, range]:
        s = self.token_starts
        return {
            "control": range(0, s["text"]),
            "text": range(s["text"], s["dx"]),
            "dx": self.bins.dim_range("dx"),
            "dy": self.bins.dim_range("dy"),
            "dyaw": self.bins.dim_range("dyaw"),
            "stop": range(s["stop"], s["stop"] + 1),
            "visual": range(s["visual"], self.vocab_size),
        }

    def control(self, name: str) -> int:
        try:
            return CONTROL_TOKENS.index(name)
        except ValueError:
            raise TokenizerError(f"unknown control token {name!r}") from None

    @property
    def stop_token(self) -> int:
        return self.bins.stop_token

    def visual_token(self, code: int) -> int:
        return self.token_starts["visual"] + int(code)

    def visual_code(self, token: int) -> int:
        if token not in self.ranges()["visual"]:
            raise TokenizerError(f"token {token} is not a visual token")
        return int(token) - self.token_starts["visual"]

    def modality(self, token: int) -> str:
        for name, r in self.ranges().items():
            if token in r:
                return name
        raise TokenizerError(f"token {token} outside vocabulary of size {self.vocab_size}")

    def layout(self) -> Dict[str, Any]:
        """Range table written into run manifests."""
        return {name: [r.start, r.stop] for name, r in self.ranges().items()} | {"vocab_size": self.vocab_size}


def save_tokenizers(path: Union[str, Path], space: TokenSpace, codebook: Codebook) -> str:
    state = {"entries": torch.from_numpy(codebook.entries.copy())}
    extra = {
        "vocabulary": list(space.vocabulary),
        "resolution": space.resolution,
        "max_index": space.max_index,
        "codebook_size": space.codebook_size,
        "geometry": {
            "image_size": codebook.image_size,
            "pool": codebook.pool,
            "patch": codebook.patch,
            "channels": codebook.channels,
        },
        "history": list(codebook.history),
        "layout": space.layout(),
    }
    return save_checkpoint(path, "tokenizers", {"codebook": state}, extra=extra)


def load_tokenizers(path: Union[str, Path]) -> Tuple[TokenSpace, Codebook]:
    payload = load_checkpoint(path, expected_kind="tokenizers")
    extra = payload["extra"]
    codebook = Codebook(
        entries=payload["states"]["codebook"]["entries"].numpy(),
        history=tuple(extra["history"]),
        **extra["geometry"],
    )
    space = TokenSpace(
        codebook_size=int(extra["codebook_size"]),
        resolution=float(extra["resolution"]),
        max_index=int(extra["max_index"]),
        vocabulary=tuple(extra["vocabulary"]),
    )
    if space.layout() != extra["layout"]:
        raise TokenizerError(f"token-space layout in {path} does not match the rebuilt layout")
    return space, codebook
