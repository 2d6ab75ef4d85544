"""Layered filter pipeline: stage ordering, verdicts, decision logging,
spam-trap routing and learning feedback.

Connection-time stages (dnsbl, rdns, spf, greylist) can refuse a sender
before any content is transferred; message-time stages (content, surbl,
bayes, policy) judge the delivered message.  The first decisive stage
wins and later stages are never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bayes as bayes_mod
from . import content_filters, source_filters
from .bayes import BayesConfig, TokenTable
from .content_filters import ContentRules, PolicyRules
from .message import ConnectionContext, EmailAddress, EmailMessage
from .source_filters import GreylistStore, LookupProvider, SourceFilterConfig

__all__ = [
    "ACCEPT",
    "REJECT_CONNECTION",
    "REJECT_MESSAGE",
    "TEMP_FAIL",
    "QUARANTINE",
    "CONNECTION_STAGES",
    "MESSAGE_STAGES",
    "ALL_STAGES",
    "DEFAULT_STAGE_ORDER",
    "Verdict",
    "DecisionLog",
    "PipelineConfig",
    "SpamTrap",
    "TrapEntry",
    "TrapStats",
    "Stores",
    "evaluate_connection",
    "evaluate_message",
    "process",
    "trap_stats",
]

ACCEPT = "accept"
REJECT_CONNECTION = "reject_connection"
REJECT_MESSAGE = "reject_message"
TEMP_FAIL = "temp_fail"
QUARANTINE = "quarantine"

CONNECTION_STAGES = ("dnsbl", "rdns", "spf", "greylist")
MESSAGE_STAGES = ("content", "surbl", "bayes", "policy")
ALL_STAGES = CONNECTION_STAGES + MESSAGE_STAGES
DEFAULT_STAGE_ORDER = ALL_STAGES

FINAL_STAGE = "final"

_OUTCOME = {
    REJECT_CONNECTION: "reject",
    REJECT_MESSAGE: "reject",
    TEMP_FAIL: "tempfail",
    QUARANTINE: "quarantine",
}


@dataclass(frozen=True)
class Verdict:
    disposition: str
    stage: str
    reason: str
    decided_at: float = 0.0

    def __post_init__(self) -> None:
        if self.disposition == REJECT_CONNECTION and self.stage not in CONNECTION_STAGES:
            raise ValueError(f"stage {self.stage!r} cannot reject a connection")
        if self.disposition == ACCEPT and self.stage != FINAL_STAGE:
            raise ValueError("accept verdicts carry the final stage")


@dataclass
class DecisionLog:
    """Per-message trace: one (stage, outcome, detail) entry per stage run."""

    message_id: str
    entries: list[tuple[str, str, str]] = field(default_factory=list)
    verdict: Verdict | None = None

    def record(self, stage: str, outcome: str, detail: str = "") -> None:
        self.entries.append((stage, outcome, detail))

    def finish(self, verdict: Verdict) -> None:
        if verdict.disposition == ACCEPT:
            self.record(FINAL_STAGE, "pass", verdict.reason)
        self.verdict = verdict

    def stages_run(self) -> list[str]:
        return [stage for stage, _, _ in self.entries]

    def export_lines(self) -> list[str]:
        return [
            f"{self.message_id} {stage} {outcome} {detail}".rstrip()
            for stage, outcome, detail in self.entries
        ]


@dataclass
class PipelineConfig:
    """Which stages run, in what order, with which rule sets."""

    stage_order: tuple[str, ...] = DEFAULT_STAGE_ORDER
    source: SourceFilterConfig = field(default_factory=SourceFilterConfig)
    content: ContentRules = field(default_factory=ContentRules)
    policy: PolicyRules = field(default_factory=PolicyRules)
    bayes: BayesConfig = field(default_factory=BayesConfig)
    learn_from_trap: bool = False
    token_table_path: str | None = None

    def __post_init__(self) -> None:
        self.stage_order = tuple(self.stage_order)
        unknown = [s for s in self.stage_order if s not in ALL_STAGES]
        if unknown:
            raise ValueError(f"unknown stages: {unknown}")
        if len(set(self.stage_order)) != len(self.stage_order):
            raise ValueError("duplicate stages in stage_order")
        seen_message_stage = False
        for stage in self.stage_order:
            if stage in MESSAGE_STAGES:
                seen_message_stage = True
            elif seen_message_stage:
                raise ValueError("connection-time stages must precede message-time stages")

    def connection_stages(self) -> list[str]:
        return [s for s in self.stage_order if s in CONNECTION_STAGES]

    def message_stages(self) -> list[str]:
        return [s for s in self.stage_order if s in MESSAGE_STAGES]


@dataclass(frozen=True)
class TrapEntry:
    message_id: str
    message: EmailMessage
    stage: str
    decided_at: float


class SpamTrap:
    """Append-only store of quarantined mail, the measurement dataset."""

    def __init__(self) -> None:
        self._entries: list[TrapEntry] = []

    def append(self, entry: TrapEntry) -> None:
        self._entries.append(entry)

    @property
    def entries(self) -> tuple[TrapEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class Stores:
    """Mutable state a running pipeline needs alongside its config."""

    greylist: GreylistStore
    tokens: TokenTable
    trap: SpamTrap

    @classmethod
    def fresh(cls, config: PipelineConfig, tokens: TokenTable | None = None) -> "Stores":
        return cls(
            greylist=GreylistStore.from_config(config.source),
            tokens=tokens if tokens is not None else TokenTable(),
            trap=SpamTrap(),
        )


def evaluate_connection(
    ctx: ConnectionContext,
    sender: EmailAddress,
    recipient: EmailAddress,
    config: PipelineConfig,
    provider: LookupProvider,
    greylist_store: GreylistStore,
    log: DecisionLog | None = None,
) -> Verdict | None:
    """Run the enabled connection-time stages; None means proceed."""
    src = config.source
    for stage in config.connection_stages():
        if stage == "dnsbl":
            if not src.dnsbl_zones:
                _record(log, stage, "pass", "no zones configured")
                continue
            hit = source_filters.dnsbl_check(ctx, src, provider)
            if hit is not None and src.reject_on_dnsbl_hit:
                return _reject(log, REJECT_CONNECTION, stage, f"listed in {hit.detail}", ctx)
            if hit is not None:
                _record(log, stage, "pass", f"listed in {hit.detail} (reject disabled)")
            elif not any(provider.is_available(z) for z in src.dnsbl_zones):
                _record(log, stage, "pass", "degraded: all zones unavailable")
            else:
                _record(log, stage, "pass", "not listed")
        elif stage == "rdns":
            hit = source_filters.rdns_check(ctx, src, provider)
            if hit is not None:
                return _reject(log, REJECT_CONNECTION, stage, f"{hit.reason}: {hit.detail}", ctx)
            _record(log, stage, "pass", "ptr ok")
        elif stage == "spf":
            result = source_filters.spf_check(ctx, provider)
            if result in src.spf_reject_on:
                return _reject(
                    log, REJECT_CONNECTION, stage, f"{result} for {ctx.mail_from_domain}", ctx
                )
            _record(log, stage, "pass", result)
        elif stage == "greylist":
            if not src.greylist_enabled:
                _record(log, stage, "pass", "disabled")
                continue
            outcome = greylist_store.check(sender, recipient, ctx)
            if outcome == source_filters.GREYLIST_TEMPFAIL:
                return _reject(log, TEMP_FAIL, stage, "triplet not yet confirmed", ctx)
            _record(log, stage, "pass", "triplet confirmed")
    return None


def evaluate_message(
    message: EmailMessage,
    config: PipelineConfig,
    provider: LookupProvider,
    token_table: TokenTable,
    log: DecisionLog | None = None,
    now: float = 0.0,
) -> Verdict:
    """Run the enabled message-time stages and settle the disposition."""
    for stage in config.message_stages():
        if stage == "content":
            hit = (
                content_filters.sender_filter(message, config.content)
                or content_filters.attachment_filter(message, config.content)
                or content_filters.keyword_filter(message, config.content)
            )
            if hit is not None:
                return _reject_at(
                    log, REJECT_MESSAGE, stage, f"{hit.reason}: {hit.detail}", now
                )
            _record(log, stage, "pass", "rules clear")
        elif stage == "surbl":
            hit = source_filters.surbl_check(message, config.source, provider)
            if hit is not None:
                return _reject_at(log, REJECT_MESSAGE, stage, f"{hit.reason}: {hit.detail}", now)
            _record(log, stage, "pass", "no listed urls")
        elif stage == "bayes":
            score = bayes_mod.score_message(message, token_table, config.bayes)
            if bayes_mod.classify(score, config.bayes) == bayes_mod.SPAM:
                verdict = Verdict(QUARANTINE, stage, f"score {score:.4f}", now)
                _record(log, stage, _OUTCOME[QUARANTINE], verdict.reason)
                return verdict
            _record(log, stage, "pass", f"score {score:.4f}")
        elif stage == "policy":
            findings = content_filters.policy_check(message, config.policy)
            if findings.score >= 1:
                verdict = Verdict(QUARANTINE, stage, ", ".join(findings.reasons), now)
                _record(log, stage, _OUTCOME[QUARANTINE], verdict.reason)
                return verdict
            _record(log, stage, "pass", "policies satisfied")
    return Verdict(ACCEPT, FINAL_STAGE, "clean", now)


def process(
    ctx: ConnectionContext,
    sender: EmailAddress,
    recipients: tuple[EmailAddress, ...] | list,
    message: EmailMessage,
    config: PipelineConfig,
    provider: LookupProvider,
    stores: Stores,
    message_id: str = "msg",
) -> tuple[Verdict, DecisionLog]:
    """Full treatment of one submission.

    Greylisting keys on the first envelope recipient.  Quarantined mail
    lands in the spam trap, and with ``learn_from_trap`` feeds the spam
    token table.
    """
    log = DecisionLog(message_id)
    verdict = evaluate_connection(
        ctx, sender, recipients[0], config, provider, stores.greylist, log
    )
    if verdict is None:
        verdict = evaluate_message(
            message, config, provider, stores.tokens, log, now=ctx.timestamp
        )
    if verdict.disposition == QUARANTINE:
        stores.trap.append(TrapEntry(message_id, message, verdict.stage, verdict.decided_at))
        if config.learn_from_trap:
            bayes_mod.learn(message, bayes_mod.SPAM, stores.tokens)
    log.finish(verdict)
    return verdict, log


@dataclass(frozen=True)
class TrapStats:
    by_stage: dict[str, int]
    by_session: dict[int, int]
    total: int


def trap_stats(trap: SpamTrap, window: float = 10800.0) -> TrapStats:
    """Trap counts grouped by trapping stage and by session bucket.

    Sessions are ``window``-second bins (three hours by default),
    numbered from the earliest trapped message.
    """
    by_stage: dict[str, int] = {}
    by_session: dict[int, int] = {}
    entries = trap.entries
    if entries:
        epoch = min(e.decided_at for e in entries)
        for e in entries:
            by_stage[e.stage] = by_stage.get(e.stage, 0) + 1
            bucket = int((e.decided_at - epoch) // window)
            by_session[bucket] = by_session.get(bucket, 0) + 1
    return TrapStats(by_stage=by_stage, by_session=by_session, total=len(entries))


def _record(log: DecisionLog | None, stage: str, outcome: str, detail: str) -> None:
    if log is not None:
        log.record(stage, outcome, detail)


def _reject(
    log: DecisionLog | None, disposition: str, stage: str, reason: str, ctx: ConnectionContext
) -> Verdict:
    return _reject_at(log, disposition, stage, reason, ctx.timestamp)


def _reject_at(
    log: DecisionLog | None, disposition: str, stage: str, reason: str, now: float
) -> Verdict:
    verdict = Verdict(disposition, stage, reason, now)
    _record(log, stage, _OUTCOME[disposition], reason)
    return verdict
