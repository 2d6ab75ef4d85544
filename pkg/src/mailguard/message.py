"""Email message model and the plain-text corpus message format.

A corpus is a directory of ``*.msg`` files, one message per file:
an RFC-822-like header block (``Name: value``, single space after the
colon), one blank line, then the body verbatim.  Attachments are
declared metadata only (``X-Attachment: filename;size_bytes``), there
is no encoded content and no MIME.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "MessageParseError",
    "EmailAddress",
    "AttachmentMeta",
    "EmailMessage",
    "ConnectionContext",
    "parse_message",
    "render_message",
    "extract_url_domains",
    "extension_chain",
]


class MessageParseError(ValueError):
    """Raised for input that violates the corpus message format."""


_ADDR_RE = re.compile(r"^([^@\s<>]+)@([^@\s<>]+)$")
_URL_HOST_RE = re.compile(r"https?://([A-Za-z0-9.\-]+)", re.IGNORECASE)
_IPV4_RE = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$")


@dataclass(frozen=True, order=True)
class EmailAddress:
    """A ``local@domain`` address; the domain is case-normalized."""

    local: str
    domain: str

    def __post_init__(self) -> None:
        if not self.local or "@" in self.local:
            raise ValueError(f"invalid local part: {self.local!r}")
        if not self.domain or "@" in self.domain:
            raise ValueError(f"invalid domain: {self.domain!r}")
        object.__setattr__(self, "domain", self.domain.lower())

    @classmethod
    def parse(cls, text: str) -> "EmailAddress":
        """Parse ``local@domain`` or ``Display Name <local@domain>``."""
        text = text.strip()
        if "<" in text:
            start = text.index("<")
            end = text.find(">", start)
            if end < 0:
                raise MessageParseError(f"unterminated angle bracket in address: {text!r}")
            text = text[start + 1 : end].strip()
        m = _ADDR_RE.match(text)
        if m is None:
            raise MessageParseError(f"malformed address: {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        return f"{self.local}@{self.domain}"

    def match_key(self) -> tuple[str, str]:
        """Case-folded key used by filters; matching is case-insensitive."""
        return (self.local.lower(), self.domain)


@dataclass(frozen=True)
class AttachmentMeta:
    """Declared attachment: a filename and a size, no content bytes."""

    filename: str
    size_bytes: int

    def __post_init__(self) -> None:
        if self.size_bytes < 0:
            raise ValueError("attachment size must be non-negative")

    @property
    def declared_extensions(self) -> list[str]:
        return extension_chain(self.filename)


@dataclass(frozen=True)
class EmailMessage:
    """One message as the filters see it.

    ``headers`` preserves the file's header lines in order (duplicates
    permitted); the remaining fields are parsed views of those headers.
    Instances are immutable and safe to share across concurrent filter
    evaluations.
    """

    envelope_sender: EmailAddress
    envelope_recipients: tuple[EmailAddress, ...]
    subject: str
    headers: tuple[tuple[str, str], ...]
    body: str
    attachments: tuple[AttachmentMeta, ...] = ()

    def __post_init__(self) -> None:
        if not self.envelope_recipients:
            raise ValueError("a message needs at least one recipient")

    def get_header(self, name: str) -> str | None:
        """First value of a header, or None."""
        for n, v in self.headers:
            if n == name:
                return v
        return None

    @property
    def date(self) -> int | None:
        """The Date header (seconds since the corpus epoch), if present."""
        raw = self.get_header("Date")
        return int(raw) if raw is not None else None

    @classmethod
    def compose(
        cls,
        sender: EmailAddress | str,
        recipients: list[EmailAddress | str] | tuple,
        subject: str,
        body: str,
        *,
        date: int | None = None,
        attachments: tuple[AttachmentMeta, ...] | list = (),
        signature: str | None = None,
        sender_display: str | None = None,
        extra_headers: tuple[tuple[str, str], ...] = (),
    ) -> "EmailMessage":
        """Build a message with a canonical header block."""
        sender = sender if isinstance(sender, EmailAddress) else EmailAddress.parse(sender)
        rcpts = tuple(
            r if isinstance(r, EmailAddress) else EmailAddress.parse(r) for r in recipients
        )
        from_value = f"{sender_display} <{sender}>" if sender_display else str(sender)
        headers: list[tuple[str, str]] = [
            ("From", from_value),
            ("To", ", ".join(str(r) for r in rcpts)),
            ("Subject", subject),
        ]
        if date is not None:
            headers.append(("Date", str(date)))
        for att in attachments:
            headers.append(("X-Attachment", f"{att.filename};{att.size_bytes}"))
        if signature is not None:
            headers.append(("X-Signature", signature))
        headers.extend(extra_headers)
        for name, value in headers:
            if "\n" in name or "\n" in value or ":" in name:
                raise ValueError(f"illegal header field: {(name, value)!r}")
        return cls(
            envelope_sender=sender,
            envelope_recipients=rcpts,
            subject=subject,
            headers=tuple(headers),
            body=body,
            attachments=tuple(attachments),
        )


@dataclass(frozen=True)
class ConnectionContext:
    """Identity of the submitting client at SMTP time."""

    client_ip: str
    helo_hostname: str
    mail_from_domain: str
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        m = _IPV4_RE.match(self.client_ip)
        if m is None or any(int(part) > 255 for part in m.groups()):
            raise ValueError(f"not a dotted-quad IPv4 address: {self.client_ip!r}")
        object.__setattr__(self, "mail_from_domain", self.mail_from_domain.lower())


def _parse_attachment(value: str, lineno: int) -> AttachmentMeta:
    name, sep, size = value.rpartition(";")
    if not sep or not name:
        raise MessageParseError(f"line {lineno}: X-Attachment needs 'filename;size_bytes'")
    try:
        size_bytes = int(size)
    except ValueError:
        raise MessageParseError(f"line {lineno}: bad attachment size {size!r}") from None
    if size_bytes < 0:
        raise MessageParseError(f"line {lineno}: negative attachment size")
    return AttachmentMeta(filename=name, size_bytes=size_bytes)


def parse_message(raw: bytes | str) -> EmailMessage:
    """Parse one corpus-format message.

    The header block runs to the first blank line; every line in it must
    contain a colon.  ``From`` and ``To`` are required.  The body is the
    text after the blank line, taken verbatim.
    """
    text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    head, sep, body = text.partition("\n\n")
    if not sep:
        body = ""

    headers: list[tuple[str, str]] = []
    attachments: list[AttachmentMeta] = []
    for lineno, line in enumerate(head.split("\n"), start=1):
        if line == "" and lineno == 1 and head == "":
            break
        name, colon, rest = line.partition(":")
        if not colon or not name:
            raise MessageParseError(f"line {lineno}: header line without colon: {line!r}")
        value = rest[1:] if rest.startswith(" ") else rest
        headers.append((name, value))
        if name == "X-Attachment":
            attachments.append(_parse_attachment(value, lineno))
        elif name == "Date":
            try:
                int(value)
            except ValueError:
                raise MessageParseError(f"line {lineno}: Date must be integer seconds") from None

    by_name: dict[str, str] = {}
    for name, value in headers:
        by_name.setdefault(name, value)
    if "From" not in by_name:
        raise MessageParseError("missing From header")
    if "To" not in by_name:
        raise MessageParseError("missing To header")

    sender = EmailAddress.parse(by_name["From"])
    rcpt_parts = [p for p in by_name["To"].split(",") if p.strip()]
    if not rcpt_parts:
        raise MessageParseError("To header lists no recipients")
    recipients = tuple(EmailAddress.parse(p) for p in rcpt_parts)

    return EmailMessage(
        envelope_sender=sender,
        envelope_recipients=recipients,
        subject=by_name.get("Subject", ""),
        headers=tuple(headers),
        body=body,
        attachments=tuple(attachments),
    )


def render_message(message: EmailMessage) -> str:
    """Render back to the corpus format; re-parsing yields an equal message."""
    lines = [f"{name}: {value}" for name, value in message.headers]
    return "\n".join(lines) + "\n\n" + message.body


def extract_url_domains(body: str) -> list[str]:
    """Host tokens of every http(s) URL in the body.

    Lowercased, de-duplicated, in first-appearance order; bare IPs come
    back as dotted-quads.  Fragments that leave no host are skipped.
    """
    seen: list[str] = []
    for match in _URL_HOST_RE.finditer(body):
        host = match.group(1).lower().strip(".-")
        if host and host not in seen:
            seen.append(host)
    return seen


def extension_chain(filename: str) -> list[str]:
    """Dot-separated suffix tokens after the base name, lowercased.

    ``update.doc.exe`` gives ``['doc', 'exe']``; a name with no dot gives
    an empty list.
    """
    parts = filename.split(".")
    return [p.lower() for p in parts[1:]]
