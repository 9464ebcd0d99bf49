"""
Vocabulary and caption encoding.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

from modules.decoder import BOS, EOS, SPECIAL_TOKENS, UNK, CaptionSequence

from .scenes import COLOR_SLOT, SHAPE_SLOT, SceneSpec, template_tokens

logger = logging.getLogger(__name__)


class Vocabulary:
    """Word <-> index map; indices 0..2 are <bos>, <eos>, <unk>."""

    def __init__(self, words: Iterable[str]):
        self._words: List[str] = list(SPECIAL_TOKENS)
        for word in words:
            if word not in self._words:
                self._words.append(word)
        self._index: Dict[str, int] = {word: i for i, word in enumerate(self._words)}

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    @property
    def K(self) -> int:
        return len(self._words)

    @property
    def words(self) -> List[str]:
        return list(self._words)

    def index(self, word: str) -> int:
        return self._index.get(word, UNK)

    def word(self, index: int) -> str:
        if not 0 <= index < len(self._words):
            raise IndexError(f"Token {index} outside vocabulary of size {len(self._words)}")
        return self._words[index]

    def save(self, path: Union[str, Path]) -> None:
        """One word per line, specials included, in index order."""
        Path(path).write_text("\n".join(self._words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        lines = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        if tuple(lines[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError(f"{path} does not start with {SPECIAL_TOKENS}")
        return cls(lines[len(SPECIAL_TOKENS):])


def build_vocabulary(spec: SceneSpec) -> Vocabulary:
    """Specials, then every color, shape and template word in sorted order."""
    words = set(spec.colors) | set(spec.shapes)
    for template in spec.templates:
        words.update(t for t in template_tokens(template) if t not in (COLOR_SLOT, SHAPE_SLOT))
    vocabulary = Vocabulary(sorted(words))
    logger.debug("Vocabulary of %d tokens", vocabulary.K)
    return vocabulary


def encode_caption(words: Sequence[str], vocabulary: Vocabulary) -> CaptionSequence:
    """Map words to indices and append EOS; unknown words become <unk>."""
    return CaptionSequence(tuple(vocabulary.index(w) for w in words) + (EOS,))


def decode_caption(tokens: Iterable[int], vocabulary: Vocabulary) -> List[str]:
    """Words up to the first EOS, skipping BOS."""
    words = []
    for token in tokens:
        token = int(token)
        if token == EOS:
            break
        if token == BOS:
            continue
        words.append(vocabulary.word(token))
    return words
