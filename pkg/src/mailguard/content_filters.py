"""Post-DATA content rules and mail-policy checks.

Keyword, sender/domain and attachment rules hard-reject; policy checks
only mark a message suspicious and leave the disposition to the
pipeline.  All matching is case-insensitive, so an uppercased message
behaves exactly like the original.
"""

from __future__ import annotations

from dataclasses import dataclass

from .message import EmailAddress, EmailMessage

__all__ = [
    "ContentRules",
    "PolicyRules",
    "Rejection",
    "PolicyFindings",
    "keyword_filter",
    "sender_filter",
    "attachment_filter",
    "policy_check",
    "match_extension_pattern",
]


@dataclass(frozen=True)
class Rejection:
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class PolicyFindings:
    """How many enabled policies the message violates, and which."""

    score: int
    reasons: tuple[str, ...]


@dataclass
class ContentRules:
    blocked_subject_terms: tuple[str, ...] = ()
    blocked_body_terms: tuple[str, ...] = ()
    blocked_senders: frozenset[EmailAddress] = frozenset()
    blocked_domains: frozenset[str] = frozenset()
    allowlist_mode: bool = False
    allowed_senders: frozenset[EmailAddress] = frozenset()
    max_attachment_bytes: int | None = None
    blocked_extension_patterns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.allowlist_mode and not self.allowed_senders:
            raise ValueError("allowlist mode needs at least one allowed sender")
        if self.max_attachment_bytes is not None and self.max_attachment_bytes <= 0:
            raise ValueError("attachment size cap must be positive")


@dataclass
class PolicyRules:
    """Organizational mail conventions that separate forged internal mail.

    ``local_domain`` scopes the display-name check: impersonation terms
    only count when the sender claims to be inside that domain.
    """

    require_signature: bool = False
    code_word: str | None = None
    flagged_display_names: tuple[str, ...] = ()
    local_domain: str | None = None

    def __post_init__(self) -> None:
        if self.code_word is not None and not self.code_word:
            raise ValueError("code word must be non-empty when set")


def keyword_filter(message: EmailMessage, rules: ContentRules) -> Rejection | None:
    """First blocked term found, subject terms before body terms."""
    subject = message.subject.lower()
    for term in rules.blocked_subject_terms:
        if term.lower() in subject:
            return Rejection("blocked_term", f"{term!r} in subject")
    body = message.body.lower()
    for term in rules.blocked_body_terms:
        if term.lower() in body:
            return Rejection("blocked_term", f"{term!r} in body")
    return None


def sender_filter(message: EmailMessage, rules: ContentRules) -> Rejection | None:
    sender = message.envelope_sender
    key = sender.match_key()
    if key in {a.match_key() for a in rules.blocked_senders}:
        return Rejection("blocked_sender", str(sender))
    if sender.domain in {d.lower() for d in rules.blocked_domains}:
        return Rejection("blocked_domain", sender.domain)
    if rules.allowlist_mode and key not in {a.match_key() for a in rules.allowed_senders}:
        return Rejection("not_allowlisted", str(sender))
    return None


def match_extension_pattern(filename: str, pattern: str) -> bool:
    """Match a dot pattern against ``basename + extension chain``.

    The first and last pattern tokens each cover exactly one name
    segment; an interior ``*`` absorbs one or more.  So ``*.exe`` hits
    only single-extension exe files, while ``*.*.exe`` hits any chain of
    at least two extensions ending in exe.
    """
    segs = [s.lower() for s in filename.split(".")]
    tokens = [t.lower() for t in pattern.split(".")]
    if not tokens or len(segs) < len(tokens):
        return False
    if tokens[0] != "*" and tokens[0] != segs[0]:
        return False
    if tokens[-1] != "*" and tokens[-1] != segs[-1]:
        return False
    if len(tokens) == 1:
        return len(segs) == 1
    return _match_inner(tokens[1:-1], segs[1:-1])


def _match_inner(tokens: list[str], segs: list[str]) -> bool:
    if not tokens:
        return not segs
    head = tokens[0]
    if head != "*":
        return bool(segs) and segs[0] == head and _match_inner(tokens[1:], segs[1:])
    for consumed in range(1, len(segs) - len(tokens) + 2):
        if _match_inner(tokens[1:], segs[consumed:]):
            return True
    return False


def attachment_filter(message: EmailMessage, rules: ContentRules) -> Rejection | None:
    """Size cap first, then extension patterns, each in declared order."""
    if rules.max_attachment_bytes is not None:
        for att in message.attachments:
            if att.size_bytes > rules.max_attachment_bytes:
                return Rejection("attachment_size", att.filename)
    for att in message.attachments:
        for pattern in rules.blocked_extension_patterns:
            if match_extension_pattern(att.filename, pattern):
                return Rejection("attachment_extension", f"{att.filename} matches {pattern}")
    return None


def policy_check(message: EmailMessage, rules: PolicyRules) -> PolicyFindings:
    """Count violated policies; a score of one or more means suspicious."""
    reasons: list[str] = []
    if rules.require_signature and message.get_header("X-Signature") is None:
        reasons.append("missing_signature")
    if rules.code_word is not None and rules.code_word.lower() not in message.body.lower():
        reasons.append("missing_code_word")
    if rules.flagged_display_names and rules.local_domain is not None:
        from_value = (message.get_header("From") or "").lower()
        if message.envelope_sender.domain == rules.local_domain.lower() and any(
            name.lower() in from_value for name in rules.flagged_display_names
        ):
            reasons.append("flagged_display_name")
    return PolicyFindings(score=len(reasons), reasons=tuple(reasons))
