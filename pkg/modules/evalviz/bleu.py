"""
Corpus-level BLEU-1..4 without brevity penalty.

Modified n-gram precision: each candidate n-gram count is clipped by its
maximum count in any single reference of that candidate's set, and clipped
matches and candidate n-grams are summed over the corpus before dividing.
BLEU-n is the geometric mean of precisions 1..n. A zero precision at some
order makes that order and every higher one 0.
"""

import collections
import math
from dataclasses import dataclass
from typing import Hashable, List, Sequence, Tuple

Tokens = Sequence[Hashable]


class BleuInputError(ValueError):
    """Candidates and reference sets cannot be scored together."""


@dataclass(frozen=True)
class BleuReport:
    scores: Tuple[float, ...]  # BLEU-1..max_n
    precisions: Tuple[float, ...]
    candidate_count: int
    reference_count: int

    def __getitem__(self, n: int) -> float:
        """BLEU-n for n in 1..max_n."""
        return self.scores[n - 1]

    @property
    def bleu1(self) -> float:
        return self.scores[0]

    @property
    def bleu2(self) -> float:
        return self.scores[1] if len(self.scores) > 1 else 0.0

    @property
    def bleu3(self) -> float:
        return self.scores[2] if len(self.scores) > 2 else 0.0

    @property
    def bleu4(self) -> float:
        return self.scores[3] if len(self.scores) > 3 else 0.0

    def as_dict(self) -> dict:
        return {f"bleu{n}": score for n, score in enumerate(self.scores, start=1)}


def ngrams(tokens: Tokens, n: int) -> collections.Counter:
    tokens = tuple(tokens)
    return collections.Counter(tokens[i:i + n] for i in range(len(tokens) - n + 1))


def clipped_counts(candidate: Tokens, references: Sequence[Tokens], n: int) -> Tuple[int, int]:
    """(clipped matches, candidate n-gram total) for one candidate at order n."""
    counts = ngrams(candidate, n)
    max_ref: collections.Counter = collections.Counter()
    for reference in references:
        max_ref |= ngrams(reference, n)
    matches = sum(min(count, max_ref[gram]) for gram, count in counts.items())
    return matches, sum(counts.values())


def bleu(candidates: Sequence[Tokens], reference_sets: Sequence[Sequence[Tokens]], max_n: int = 4) -> BleuReport:
    """
    Score candidates against their reference sets.

    Args:
        candidates: Token sequences, one per image
        reference_sets: Non-empty list of reference token sequences per image
        max_n: Highest n-gram order

    Returns:
        BleuReport with BLEU-1..max_n

    Raises:
        BleuInputError: empty candidate list, count mismatch or an empty reference set
    """
    if not candidates:
        raise BleuInputError("No candidates to score")
    if len(candidates) != len(reference_sets):
        raise BleuInputError(f"{len(candidates)} candidates but {len(reference_sets)} reference sets")
    if max_n < 1:
        raise BleuInputError(f"max_n must be >= 1, got {max_n}")
    for index, references in enumerate(reference_sets):
        if not references:
            raise BleuInputError(f"Reference set {index} is empty")

    matches = [0] * max_n
    totals = [0] * max_n
    for candidate, references in zip(candidates, reference_sets):
        for n in range(1, max_n + 1):
            m, t = clipped_counts(candidate, references, n)
            matches[n - 1] += m
            totals[n - 1] += t

    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    scores: List[float] = []
    log_sum = 0.0
    for n, precision in enumerate(precisions, start=1):
        if precision == 0.0 or (scores and scores[-1] == 0.0):
            scores.append(0.0)
            continue
        log_sum += math.log(precision)
        scores.append(math.exp(log_sum / n))
    return BleuReport(
        scores=tuple(scores),
        precisions=precisions,
        candidate_count=len(candidates),
        reference_count=sum(len(refs) for refs in reference_sets),
    )


def sentence_bleu(candidate: Tokens, references: Sequence[Tokens], max_n: int = 4) -> BleuReport:
    return bleu([candidate], [references], max_n)
