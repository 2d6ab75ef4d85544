"""Connection-time checks: DNS blocklists, URL blocklists, sender
authorization, reverse-DNS sanity and greylisting.

Every lookup goes through a :class:`LookupProvider`, so runs never touch
the network and are reproducible from fixture files.  Unavailable zones
or lists fail open with a logged warning; running several zones means a
dead one costs nothing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .message import ConnectionContext, EmailAddress, EmailMessage, extract_url_domains

__all__ = [
    "SPF_PASS",
    "SPF_FAIL",
    "SPF_SOFTFAIL",
    "SPF_NONE",
    "GREYLIST_ACCEPT",
    "GREYLIST_TEMPFAIL",
    "Rejection",
    "SpfPolicy",
    "LookupProvider",
    "FixtureProvider",
    "SourceFilterConfig",
    "GreylistEntry",
    "GreylistStore",
    "dnsbl_check",
    "surbl_check",
    "spf_check",
    "rdns_check",
    "greylist_check",
]

log = logging.getLogger(__name__)

SPF_PASS = "pass"
SPF_FAIL = "fail"
SPF_SOFTFAIL = "softfail"
SPF_NONE = "none"

GREYLIST_ACCEPT = "accept"
GREYLIST_TEMPFAIL = "tempfail"

# default individual lists; the combined list is a single point of failure
DEFAULT_SURBL_LISTS = ("sc.surbl.org", "ws.surbl.org", "ob.surbl.org", "ab.surbl.org")


@dataclass(frozen=True)
class Rejection:
    """Why a check wants the mail refused; ``detail`` names the evidence."""

    reason: str
    detail: str = ""


@dataclass(frozen=True)
class SpfPolicy:
    """Published set of IPs allowed to send for a domain."""

    authorized_ips: frozenset[str]
    failure_mode: str = "hard_fail"  # or "soft_fail"

    def __post_init__(self) -> None:
        if self.failure_mode not in ("hard_fail", "soft_fail"):
            raise ValueError(f"unknown failure mode {self.failure_mode!r}")


class LookupProvider:
    """Answers the DNS-shaped questions the source filters ask.

    Implementations must be deterministic for a fixed data set: the same
    query always gets the same answer.
    """

    def dnsbl_listed(self, ip: str, zone: str) -> bool:
        raise NotImplementedError

    def surbl_listed(self, domain: str, list_name: str) -> bool:
        raise NotImplementedError

    def spf_policy(self, domain: str) -> SpfPolicy | None:
        raise NotImplementedError

    def ptr_record(self, ip: str) -> str | None:
        raise NotImplementedError

    def is_available(self, zone_or_list: str) -> bool:
        return True


class FixtureProvider(LookupProvider):
    """Lookup answers from a fixture file.

    One record per line: ``dnsbl <zone> <ip>``, ``surbl <list> <domain>``,
    ``spf <domain> <hard|soft> <ip>[,<ip>...]``, ``ptr <ip> <hostname>``,
    ``unavailable <zone-or-list>``.  Lines starting ``#`` are comments.
    """

    def __init__(self) -> None:
        self._dnsbl: set[tuple[str, str]] = set()
        self._surbl: set[tuple[str, str]] = set()
        self._spf: dict[str, SpfPolicy] = {}
        self._ptr: dict[str, str] = {}
        self._down: set[str] = set()

    # -- construction ------------------------------------------------

    def add_dnsbl(self, zone: str, ip: str) -> None:
        self._dnsbl.add((zone, ip))

    def add_surbl(self, list_name: str, domain: str) -> None:
        self._surbl.add((list_name, domain.lower()))

    def add_spf(self, domain: str, mode: str, ips) -> None:
        self._spf[domain.lower()] = SpfPolicy(frozenset(ips), mode)

    def add_ptr(self, ip: str, hostname: str) -> None:
        self._ptr[ip] = hostname

    def mark_unavailable(self, zone_or_list: str) -> None:
        self._down.add(zone_or_list)

    @classmethod
    def parse(cls, text: str) -> "FixtureProvider":
        provider = cls()
        for lineno, line in enumerate(text.split("\n"), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            kind = fields[0]
            try:
                if kind == "dnsbl":
                    provider.add_dnsbl(fields[1], fields[2])
                elif kind == "surbl":
                    provider.add_surbl(fields[1], fields[2])
                elif kind == "spf":
                    mode = {"hard": "hard_fail", "soft": "soft_fail"}[fields[2]]
                    provider.add_spf(fields[1], mode, fields[3].split(","))
                elif kind == "ptr":
                    provider.add_ptr(fields[1], fields[2])
                elif kind == "unavailable":
                    provider.mark_unavailable(fields[1])
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except (IndexError, KeyError):
                raise ValueError(f"fixture line {lineno}: malformed record {line!r}") from None
        return provider

    @classmethod
    def load(cls, path) -> "FixtureProvider":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def render(self) -> str:
        """Serialize back to fixture lines, sorted for stable output."""
        lines = []
        for zone, ip in sorted(self._dnsbl):
            lines.append(f"dnsbl {zone} {ip}")
        for list_name, domain in sorted(self._surbl):
            lines.append(f"surbl {list_name} {domain}")
        for domain in sorted(self._spf):
            policy = self._spf[domain]
            mode = "hard" if policy.failure_mode == "hard_fail" else "soft"
            lines.append(f"spf {domain} {mode} {','.join(sorted(policy.authorized_ips))}")
        for ip in sorted(self._ptr):
            lines.append(f"ptr {ip} {self._ptr[ip]}")
        for name in sorted(self._down):
            lines.append(f"unavailable {name}")
        return "\n".join(lines) + "\n" if lines else ""

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())

    def merge(self, other: "FixtureProvider") -> None:
        self._dnsbl |= other._dnsbl
        self._surbl |= other._surbl
        self._spf.update(other._spf)
        self._ptr.update(other._ptr)
        self._down |= other._down

    # -- LookupProvider ----------------------------------------------

    def dnsbl_listed(self, ip: str, zone: str) -> bool:
        return (zone, ip) in self._dnsbl

    def surbl_listed(self, domain: str, list_name: str) -> bool:
        return (list_name, domain.lower()) in self._surbl

    def spf_policy(self, domain: str) -> SpfPolicy | None:
        return self._spf.get(domain.lower())

    def ptr_record(self, ip: str) -> str | None:
        return self._ptr.get(ip)

    def is_available(self, zone_or_list: str) -> bool:
        return zone_or_list not in self._down


@dataclass
class SourceFilterConfig:
    dnsbl_zones: tuple[str, ...] = ()
    reject_on_dnsbl_hit: bool = True
    surbl_lists: tuple[str, ...] = DEFAULT_SURBL_LISTS
    surbl_whitelist: frozenset[str] = frozenset()
    spf_reject_on: frozenset[str] = frozenset({SPF_FAIL, SPF_SOFTFAIL})
    rdns_require_ptr: bool = True
    rdns_require_helo_match: bool = False
    greylist_min_retry: float = 10.0
    greylist_max_retry: float = 43200.0  # 12 hours
    greylist_enabled: bool = True

    def __post_init__(self) -> None:
        if self.greylist_min_retry >= self.greylist_max_retry:
            raise ValueError("greylist retry window is empty")


def dnsbl_check(
    ctx: ConnectionContext, config: SourceFilterConfig, provider: LookupProvider
) -> Rejection | None:
    """First configured zone listing the client IP, if any.

    Zone order is the tie-break; unavailable zones are skipped so a dead
    list never blocks mail.
    """
    for zone in config.dnsbl_zones:
        if not provider.is_available(zone):
            log.warning("dnsbl zone %s unavailable, skipping", zone)
            continue
        if provider.dnsbl_listed(ctx.client_ip, zone):
            return Rejection("dnsbl_listed", zone)
    return None


def surbl_check(
    message: EmailMessage, config: SourceFilterConfig, provider: LookupProvider
) -> Rejection | None:
    """Reject when any body URL domain sits on a configured list.

    Any hit counts; attribution among multiple domains is not the
    filter's job.  Whitelisted domains are never queried.
    """
    for domain in extract_url_domains(message.body):
        if domain in config.surbl_whitelist:
            continue
        for list_name in config.surbl_lists:
            if not provider.is_available(list_name):
                log.warning("surbl list %s unavailable, no check performed", list_name)
                continue
            if provider.surbl_listed(domain, list_name):
                return Rejection("surbl_listed", f"{domain} on {list_name}")
    return None


def spf_check(ctx: ConnectionContext, provider: LookupProvider) -> str:
    """Evaluate the sender domain's published policy for this client."""
    policy = provider.spf_policy(ctx.mail_from_domain)
    if policy is None:
        return SPF_NONE
    if ctx.client_ip in policy.authorized_ips:
        return SPF_PASS
    return SPF_FAIL if policy.failure_mode == "hard_fail" else SPF_SOFTFAIL


def rdns_check(
    ctx: ConnectionContext, config: SourceFilterConfig, provider: LookupProvider
) -> Rejection | None:
    ptr = provider.ptr_record(ctx.client_ip)
    if config.rdns_require_ptr and ptr is None:
        return Rejection("missing_ptr", ctx.client_ip)
    if (
        config.rdns_require_helo_match
        and ptr is not None
        and ptr.lower() != ctx.helo_hostname.lower()
    ):
        return Rejection("helo_mismatch", f"ptr={ptr} helo={ctx.helo_hostname}")
    return None


@dataclass
class GreylistEntry:
    sender: str
    recipient: str
    client_ip: str
    first_seen: float
    state: str  # "pending" | "confirmed"


class GreylistStore:
    """Triplet store behind greylisting; one entry per triplet.

    Check-and-update on a triplet is atomic with respect to the caller's
    single-writer contract; ``confirmed`` is absorbing.
    """

    def __init__(self, min_retry: float = 10.0, max_retry: float = 43200.0):
        if min_retry >= max_retry:
            raise ValueError("greylist retry window is empty")
        self.min_retry = min_retry
        self.max_retry = max_retry
        self._entries: dict[tuple[str, str, str], GreylistEntry] = {}

    @classmethod
    def from_config(cls, config: SourceFilterConfig) -> "GreylistStore":
        return cls(config.greylist_min_retry, config.greylist_max_retry)

    def __len__(self) -> int:
        return len(self._entries)

    def entry(self, sender, recipient, client_ip) -> GreylistEntry | None:
        return self._entries.get(self._key(sender, recipient, client_ip))

    @staticmethod
    def _key(sender, recipient, client_ip) -> tuple[str, str, str]:
        return (str(sender).lower(), str(recipient).lower(), client_ip)

    def check(self, sender, recipient, ctx: ConnectionContext) -> str:
        """Advance the triplet's state for an attempt at ``ctx.timestamp``.

        Unknown triplets go pending and tempfail.  A retry inside the
        window confirms; too early leaves first_seen alone; past the
        window the attempt counts as a fresh first contact.
        """
        key = self._key(sender, recipient, ctx.client_ip)
        now = ctx.timestamp
        entry = self._entries.get(key)
        if entry is None:
            self._entries[key] = GreylistEntry(key[0], key[1], key[2], now, "pending")
            return GREYLIST_TEMPFAIL
        if entry.state == "confirmed":
            return GREYLIST_ACCEPT
        delta = now - entry.first_seen
        if delta < self.min_retry:
            return GREYLIST_TEMPFAIL
        if delta > self.max_retry:
            entry.first_seen = now
            return GREYLIST_TEMPFAIL
        entry.state = "confirmed"
        return GREYLIST_ACCEPT

    # -- optional snapshot --------------------------------------------

    def render(self) -> str:
        lines = []
        for key in sorted(self._entries):
            e = self._entries[key]
            lines.append(f"{e.sender} {e.recipient} {e.client_ip} {e.first_seen!r} {e.state}")
        return "\n".join(lines) + "\n" if lines else ""

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())

    def load(self, path) -> None:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                sender, recipient, ip, first_seen, state = line.split()
                self._entries[(sender, recipient, ip)] = GreylistEntry(
                    sender, recipient, ip, float(first_seen), state
                )


def greylist_check(
    sender: EmailAddress,
    recipient: EmailAddress,
    ctx: ConnectionContext,
    store: GreylistStore,
) -> str:
    """Module-level face of :meth:`GreylistStore.check`."""
    return store.check(sender, recipient, ctx)
