from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from lcvn.datagen.vocabulary import VOCABULARY
from lcvn.errors import TokenizerError


@dataclass(frozen=True)
class WordTokenizer:
    """Closed-vocabulary whitespace tokenizer; ids start at ``base``."""

    vocabulary: Tuple[str, ...] = VOCABULARY
    base: int = 0
    _ids: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise TokenizerError("vocabulary contains duplicate words")
        object.__setattr__(self, "_ids", {w: self.base + i for i, w in enumerate(self.vocabulary)})

    def __len__(self) -> int:
        return len(self.vocabulary)

    def text_tokenize(self, text: str) -> List[int]:
        tokens = []
        for word in text.split():
            if word not in self._ids:
                raise TokenizerError(f"out-of-vocabulary word {word!r}")
            tokens.append(self._ids[word])
        return tokens

    def text_detokenize(self, tokens: Sequence[int]) -> str:
        words = []
        for token in tokens:
            local = int(token) - self.base
            if not 0 <= local < len(self.vocabulary):
                raise TokenizerError(f"token {token} is not a word token")
            words.append(self.vocabulary[local])
        return " ".join(words)

    def from_instruction_ids(self, ids: Sequence[int]) -> List[int]:
        """Map vocabulary indices (as stored on instructions) to token ids."""
        return [self.base + int(i) for i in ids]
