"""Token-frequency spam classifier backed by persistent count tables.

Two tables are kept, one counting token occurrences over ingested spam
and one over legitimate mail.  A token's spam probability is the ratio
of its per-message rates, clamped away from 0 and 1; message scores
combine the most decisive tokens with the product rule
``P = prod(p) / (prod(p) + prod(1 - p))``, evaluated in log space.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .message import EmailMessage

__all__ = [
    "SPAM",
    "HAM",
    "TokenTable",
    "BayesConfig",
    "tokenize",
    "token_probability",
    "score_message",
    "classify",
    "learn",
    "prune_dictionary",
]

SPAM = "spam"
HAM = "ham"

# split on anything non-alphanumeric, lowercase, drop one-char tokens
_TOKEN_RE = re.compile(r"[a-z0-9]{2,}")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class TokenTable:
    """Occurrence counts per token plus ingested-message totals.

    Scoring is a pure read and may run concurrently; ``learn`` and
    ``prune_dictionary`` mutate and follow a single-writer contract.
    """

    spam_counts: dict[str, int] = field(default_factory=dict)
    ham_counts: dict[str, int] = field(default_factory=dict)
    spam_message_total: int = 0
    ham_message_total: int = 0
    spam_learning_enabled: bool = True
    ham_learning_enabled: bool = True

    def distinct_tokens(self) -> set[str]:
        return set(self.spam_counts) | set(self.ham_counts)

    def copy(self) -> "TokenTable":
        return TokenTable(
            spam_counts=dict(self.spam_counts),
            ham_counts=dict(self.ham_counts),
            spam_message_total=self.spam_message_total,
            ham_message_total=self.ham_message_total,
            spam_learning_enabled=self.spam_learning_enabled,
            ham_learning_enabled=self.ham_learning_enabled,
        )

    def render(self) -> str:
        """Serialize to the table text format (bit-exact round trip)."""
        lines = [f"totals {self.spam_message_total} {self.ham_message_total}"]
        for token in sorted(self.distinct_tokens()):
            lines.append(
                f"{token} {self.spam_counts.get(token, 0)} {self.ham_counts.get(token, 0)}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())

    @classmethod
    def parse(cls, text: str) -> "TokenTable":
        lines = [ln for ln in text.split("\n") if ln]
        if not lines or not lines[0].startswith("totals "):
            raise ValueError("token table must start with a 'totals' line")
        _, spam_total, ham_total = lines[0].split()
        table = cls(spam_message_total=int(spam_total), ham_message_total=int(ham_total))
        for ln in lines[1:]:
            token, spam_n, ham_n = ln.split()
            if int(spam_n):
                table.spam_counts[token] = int(spam_n)
            if int(ham_n):
                table.ham_counts[token] = int(ham_n)
        return table

    @classmethod
    def load(cls, path) -> "TokenTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


@dataclass(frozen=True)
class BayesConfig:
    threshold: float = 0.7
    dictionary_cap: int = 50000
    probability_floor: float = 0.01
    probability_ceiling: float = 0.99
    max_tokens_scored: int = 15

    def __post_init__(self) -> None:
        if not (0.0 < self.probability_floor < 0.5 < self.probability_ceiling < 1.0):
            raise ValueError("need 0 < floor < 0.5 < ceiling < 1")
        if not (0.5 <= self.threshold <= 1.0):
            raise ValueError("threshold must lie in [0.5, 1.0]")
        if self.dictionary_cap < 1 or self.max_tokens_scored < 1:
            raise ValueError("caps must be positive")


def token_probability(token: str, table: TokenTable, config: BayesConfig) -> float:
    """Spam probability of one token from its per-message rates.

    With spam rate ``s`` and legitimate rate ``h`` the raw value is
    ``s / (h + s)``, clamped into the configured band; an unseen token
    is neutral (0.5).
    """
    if table.spam_message_total <= 0 or table.ham_message_total <= 0:
        raise ValueError("token table has empty message totals; train or load a table first")
    s = table.spam_counts.get(token, 0) / table.spam_message_total
    h = table.ham_counts.get(token, 0) / table.ham_message_total
    if s + h == 0.0:
        return 0.5
    return min(max(s / (h + s), config.probability_floor), config.probability_ceiling)


def score_message(message: EmailMessage, table: TokenTable, config: BayesConfig) -> float:
    """Combined spam probability of the subject plus body.

    The ``max_tokens_scored`` distinct tokens deviating most from 0.5
    enter the product rule; ties break on the token itself so scoring
    is order-independent.  No tokens, or only unseen ones, score 0.5.
    """
    tokens = set(tokenize(message.subject + " " + message.body))
    if not tokens:
        return 0.5
    probs = {t: token_probability(t, table, config) for t in tokens}
    ranked = sorted(probs, key=lambda t: (-abs(probs[t] - 0.5), t))
    picked = [probs[t] for t in ranked[: config.max_tokens_scored]]
    log_spam = sum(math.log(p) for p in picked)
    log_ham = sum(math.log(1.0 - p) for p in picked)
    return 1.0 / (1.0 + math.exp(log_ham - log_spam))


def classify(score: float, config: BayesConfig) -> str:
    """``spam`` iff the score strictly exceeds the threshold."""
    return SPAM if score > config.threshold else HAM


def learn(message: EmailMessage, label: str, table: TokenTable) -> TokenTable:
    """Fold a labeled message into the matching table, in place.

    Counts every occurrence, not just distinct tokens, so learning the
    same message twice doubles its increments.  A disabled learning
    toggle makes this a no-op.
    """
    if label not in (SPAM, HAM):
        raise ValueError(f"label must be {SPAM!r} or {HAM!r}")
    if label == SPAM and not table.spam_learning_enabled:
        return table
    if label == HAM and not table.ham_learning_enabled:
        return table
    counts = table.spam_counts if label == SPAM else table.ham_counts
    for token, n in Counter(tokenize(message.subject + " " + message.body)).items():
        counts[token] = counts.get(token, 0) + n
    if label == SPAM:
        table.spam_message_total += 1
    else:
        table.ham_message_total += 1
    return table


def prune_dictionary(table: TokenTable, config: BayesConfig) -> TokenTable:
    """Shrink to the cap by total count, dropping the rarest tokens.

    Tokens are ranked by spam+ham count, ties broken lexicographically
    ascending (the earlier token survives).  Idempotent.
    """
    tokens = table.distinct_tokens()
    if len(tokens) <= config.dictionary_cap:
        return table
    ranked = sorted(
        tokens,
        key=lambda t: (-(table.spam_counts.get(t, 0) + table.ham_counts.get(t, 0)), t),
    )
    keep = set(ranked[: config.dictionary_cap])
    for token in tokens - keep:
        table.spam_counts.pop(token, None)
        table.ham_counts.pop(token, None)
    return table
