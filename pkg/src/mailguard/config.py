"""Sectioned key=value config files.

The same surface syntax serves pipeline configs and simulator scenario
files: ``[section]`` headers, ``key = value`` pairs, ``#`` comments,
lists comma-separated, durations as integers with an ``s``/``m``/``h``
suffix, booleans ``on``/``off``.
"""

from __future__ import annotations

import configparser
import os
import re

from .bayes import BayesConfig
from .content_filters import ContentRules, PolicyRules
from .message import EmailAddress
from .pipeline import PipelineConfig
from .source_filters import DEFAULT_SURBL_LISTS, SourceFilterConfig

__all__ = [
    "ConfigError",
    "parse_bool",
    "parse_duration",
    "parse_list",
    "read_sections",
    "parse_pipeline_config",
    "load_pipeline_config",
    "render_pipeline_config",
]

_DURATION_RE = re.compile(r"^(\d+)([smh]?)$")
_UNIT_SECONDS = {"": 1, "s": 1, "m": 60, "h": 3600}

_PIPELINE_KEYS = {
    "stages": {"stage_order", "learn_from_trap"},
    "dnsbl": {"dnsbl_zones", "reject_on_dnsbl_hit"},
    "surbl": {"surbl_lists", "surbl_whitelist"},
    "spf": {"spf_reject_on"},
    "greylist": {"greylist_min_retry", "greylist_max_retry", "greylist_enabled"},
    "rdns": {"rdns_require_ptr", "rdns_require_helo_match"},
    "content": {
        "blocked_subject_terms",
        "blocked_body_terms",
        "blocked_senders",
        "blocked_domains",
        "allowlist_mode",
        "allowed_senders",
        "max_attachment_bytes",
        "blocked_extension_patterns",
    },
    "policy": {"require_signature", "code_word", "flagged_display_names", "local_domain"},
    "bayes": {
        "threshold",
        "dictionary_cap",
        "probability_floor",
        "probability_ceiling",
        "max_tokens_scored",
        "token_table",
    },
}


class ConfigError(ValueError):
    """Raised for malformed or contradictory configuration input."""


def parse_bool(value: str) -> bool:
    value = value.strip().lower()
    if value == "on":
        return True
    if value == "off":
        return False
    raise ConfigError(f"expected on/off, got {value!r}")


def parse_duration(value: str) -> float:
    """Seconds from ``10s`` / ``15m`` / ``12h`` / bare integer seconds."""
    m = _DURATION_RE.match(value.strip())
    if m is None:
        raise ConfigError(f"bad duration {value!r}")
    return int(m.group(1)) * _UNIT_SECONDS[m.group(2)]


def parse_list(value: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in value.split(",") if part.strip())


def read_sections(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#",)
    )
    cp.optionxform = str  # keys are case-sensitive, as written
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return cp


def _check_known_keys(cp: configparser.ConfigParser, extra_sections: set[str]) -> None:
    for section in cp.sections():
        if section in extra_sections:
            continue
        if section not in _PIPELINE_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _PIPELINE_KEYS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")


def pipeline_config_from_parser(
    cp: configparser.ConfigParser,
    base_dir: str | None = None,
    extra_sections: set[str] | None = None,
) -> PipelineConfig:
    """Assemble a PipelineConfig from already-parsed sections.

    Sections and keys default when absent; unknown ones are an error so
    typos never silently disable a filter.
    """
    _check_known_keys(cp, extra_sections or set())

    def get(section: str, key: str, fallback: str | None = None) -> str | None:
        if cp.has_section(section) and key in cp[section]:
            return cp[section][key].strip()
        return fallback

    stage_order = parse_list(get("stages", "stage_order", "") or "")
    learn_from_trap = parse_bool(get("stages", "learn_from_trap", "off") or "off")

    source = SourceFilterConfig(
        dnsbl_zones=parse_list(get("dnsbl", "dnsbl_zones", "") or ""),
        reject_on_dnsbl_hit=parse_bool(get("dnsbl", "reject_on_dnsbl_hit", "on") or "on"),
        surbl_lists=parse_list(get("surbl", "surbl_lists", ", ".join(DEFAULT_SURBL_LISTS))),
        surbl_whitelist=frozenset(
            d.lower() for d in parse_list(get("surbl", "surbl_whitelist", "") or "")
        ),
        spf_reject_on=frozenset(parse_list(get("spf", "spf_reject_on", "fail, softfail"))),
        rdns_require_ptr=parse_bool(get("rdns", "rdns_require_ptr", "on") or "on"),
        rdns_require_helo_match=parse_bool(
            get("rdns", "rdns_require_helo_match", "off") or "off"
        ),
        greylist_min_retry=parse_duration(get("greylist", "greylist_min_retry", "10s")),
        greylist_max_retry=parse_duration(get("greylist", "greylist_max_retry", "12h")),
        greylist_enabled=parse_bool(get("greylist", "greylist_enabled", "on") or "on"),
    )

    max_bytes_raw = get("content", "max_attachment_bytes")
    content = ContentRules(
        blocked_subject_terms=parse_list(get("content", "blocked_subject_terms", "") or ""),
        blocked_body_terms=parse_list(get("content", "blocked_body_terms", "") or ""),
        blocked_senders=frozenset(
            EmailAddress.parse(a) for a in parse_list(get("content", "blocked_senders", "") or "")
        ),
        blocked_domains=frozenset(
            d.lower() for d in parse_list(get("content", "blocked_domains", "") or "")
        ),
        allowlist_mode=parse_bool(get("content", "allowlist_mode", "off") or "off"),
        allowed_senders=frozenset(
            EmailAddress.parse(a) for a in parse_list(get("content", "allowed_senders", "") or "")
        ),
        max_attachment_bytes=int(max_bytes_raw) if max_bytes_raw else None,
        blocked_extension_patterns=parse_list(
            get("content", "blocked_extension_patterns", "") or ""
        ),
    )

    code_word = get("policy", "code_word")
    policy = PolicyRules(
        require_signature=parse_bool(get("policy", "require_signature", "off") or "off"),
        code_word=code_word if code_word else None,
        flagged_display_names=parse_list(get("policy", "flagged_display_names", "") or ""),
        local_domain=get("policy", "local_domain") or None,
    )

    bayes_cfg = BayesConfig(
        threshold=float(get("bayes", "threshold", "0.7")),
        dictionary_cap=int(get("bayes", "dictionary_cap", "50000")),
        probability_floor=float(get("bayes", "probability_floor", "0.01")),
        probability_ceiling=float(get("bayes", "probability_ceiling", "0.99")),
        max_tokens_scored=int(get("bayes", "max_tokens_scored", "15")),
    )

    table_path = get("bayes", "token_table")
    if table_path and base_dir:
        table_path = os.path.join(base_dir, table_path) if not os.path.isabs(table_path) else table_path

    return PipelineConfig(
        stage_order=stage_order,
        source=source,
        content=content,
        policy=policy,
        bayes=bayes_cfg,
        learn_from_trap=learn_from_trap,
        token_table_path=table_path,
    )


def parse_pipeline_config(text: str, base_dir: str | None = None) -> PipelineConfig:
    return pipeline_config_from_parser(read_sections(text), base_dir)


def load_pipeline_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_pipeline_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def _onoff(flag: bool) -> str:
    return "on" if flag else "off"


def render_pipeline_config(config: PipelineConfig) -> str:
    """Write a config back out; parsing the result reproduces it."""
    out: list[str] = []
    out.append("[stages]")
    out.append(f"stage_order = {', '.join(config.stage_order)}")
    out.append(f"learn_from_trap = {_onoff(config.learn_from_trap)}")
    src = config.source
    out.append("")
    out.append("[dnsbl]")
    out.append(f"dnsbl_zones = {', '.join(src.dnsbl_zones)}")
    out.append(f"reject_on_dnsbl_hit = {_onoff(src.reject_on_dnsbl_hit)}")
    out.append("")
    out.append("[surbl]")
    out.append(f"surbl_lists = {', '.join(src.surbl_lists)}")
    out.append(f"surbl_whitelist = {', '.join(sorted(src.surbl_whitelist))}")
    out.append("")
    out.append("[spf]")
    out.append(f"spf_reject_on = {', '.join(sorted(src.spf_reject_on))}")
    out.append("")
    out.append("[greylist]")
    out.append(f"greylist_min_retry = {int(src.greylist_min_retry)}s")
    out.append(f"greylist_max_retry = {int(src.greylist_max_retry)}s")
    out.append(f"greylist_enabled = {_onoff(src.greylist_enabled)}")
    out.append("")
    out.append("[rdns]")
    out.append(f"rdns_require_ptr = {_onoff(src.rdns_require_ptr)}")
    out.append(f"rdns_require_helo_match = {_onoff(src.rdns_require_helo_match)}")
    rules = config.content
    out.append("")
    out.append("[content]")
    out.append(f"blocked_subject_terms = {', '.join(rules.blocked_subject_terms)}")
    out.append(f"blocked_body_terms = {', '.join(rules.blocked_body_terms)}")
    out.append(f"blocked_senders = {', '.join(sorted(str(a) for a in rules.blocked_senders))}")
    out.append(f"blocked_domains = {', '.join(sorted(rules.blocked_domains))}")
    out.append(f"allowlist_mode = {_onoff(rules.allowlist_mode)}")
    out.append(f"allowed_senders = {', '.join(sorted(str(a) for a in rules.allowed_senders))}")
    if rules.max_attachment_bytes is not None:
        out.append(f"max_attachment_bytes = {rules.max_attachment_bytes}")
    out.append(f"blocked_extension_patterns = {', '.join(rules.blocked_extension_patterns)}")
    pol = config.policy
    out.append("")
    out.append("[policy]")
    out.append(f"require_signature = {_onoff(pol.require_signature)}")
    if pol.code_word is not None:
        out.append(f"code_word = {pol.code_word}")
    out.append(f"flagged_display_names = {', '.join(pol.flagged_display_names)}")
    if pol.local_domain is not None:
        out.append(f"local_domain = {pol.local_domain}")
    bay = config.bayes
    out.append("")
    out.append("[bayes]")
    out.append(f"threshold = {bay.threshold}")
    out.append(f"dictionary_cap = {bay.dictionary_cap}")
    out.append(f"probability_floor = {bay.probability_floor}")
    out.append(f"probability_ceiling = {bay.probability_ceiling}")
    out.append(f"max_tokens_scored = {bay.max_tokens_scored}")
    if config.token_table_path:
        out.append(f"token_table = {config.token_table_path}")
    return "\n".join(out) + "\n"
