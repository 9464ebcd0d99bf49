"""
Caption token sequences and the reserved vocabulary indices.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

BOS = 0
EOS = 1
UNK = 2
SPECIAL_TOKENS = ("<bos>", "<eos>", "<unk>")


@dataclass(frozen=True)
class CaptionSequence:
    """Vocabulary indices y_1..y_C; the last one, and only the last one, is EOS."""
    tokens: Tuple[int, ...]

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        if not tokens or tokens[-1] != EOS or EOS in tokens[:-1]:
            raise ValueError(f"Caption must end with exactly one EOS ({EOS}): {list(tokens)}")
        if any(t < 0 for t in tokens):
            raise ValueError(f"Negative token index in {list(tokens)}")
        object.__setattr__(self, "tokens", tokens)

    @property
    def C(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> Tuple[int, ...]:
        """Tokens without the terminal EOS."""
        return self.tokens[:-1]

    @property
    def previous(self) -> Tuple[int, ...]:
        """Inputs fed at each step under teacher forcing: BOS, y_1, ..., y_{C-1}."""
        return (BOS,) + self.tokens[:-1]

    def check_vocabulary(self, K: int) -> None:
        bad = [t for t in self.tokens if t >= K]
        if bad:
            raise ValueError(f"Token indices {bad} out of range for K={K}")

    @classmethod
    def from_words(cls, words: Sequence[int]) -> "CaptionSequence":
        return cls(tuple(words) + (EOS,))
