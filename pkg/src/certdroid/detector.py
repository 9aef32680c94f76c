"""Four-stage malware detector.

Stages run in a fixed order and each contributes at most one reason:

1. BLACKLIST            signer serial is blacklisted and the app uses a suspicious API
2. ROOT_COMMAND         a root command token occurs in the code
3. SMS_CONCEALMENT      sends SMS and hides incoming SMS (high-priority receiver + abortBroadcast)
4. LIKELIHOOD_BEHAVIOR  a permission likelihood ratio exceeds T_L and the app
                        sends SMS or touches enough sensitive identifiers

How stage 4 combines its parts is configurable; the default is
``(L_req > T_L or L_api > T_L) and (sends_sms or sensitive >= threshold)``.
Both likelihood ratios are always computed so reports can show them.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

from . import blacklist as _bl
from .errors import ConfigMismatch
from .likelihood import log_likelihood_ratio

BLACKLIST = "BLACKLIST"
ROOT_COMMAND = "ROOT_COMMAND"
SMS_CONCEALMENT = "SMS_CONCEALMENT"
LIKELIHOOD_BEHAVIOR = "LIKELIHOOD_BEHAVIOR"
STAGES = (BLACKLIST, ROOT_COMMAND, SMS_CONCEALMENT, LIKELIHOOD_BEHAVIOR)

MALICIOUS = "malicious"
BENIGN = "benign"


@dataclass(frozen=True)
class DetectorParams:
    T_L: float = 1.0
    sensitive_threshold: int = 2
    short_circuit: bool = True
    channel_rule: Literal["or", "and"] = "or"
    behavior_rule: Literal["and", "or"] = "and"

    def __post_init__(self):
        if not self.T_L > 0:
            raise ValueError("T_L must be positive")
        if not 1 <= self.sensitive_threshold <= 4:
            raise ValueError("sensitive_threshold must lie in [1, 4]")
        if self.channel_rule not in ("or", "and") or self.behavior_rule not in ("and", "or"):
            raise ValueError("unknown combination rule")


@dataclass(frozen=True)
class Verdict:
    decision: str
    reasons: tuple[str, ...]
    lambda_requested: float
    lambda_api_related: float
    log_lambda_requested: float
    log_lambda_api_related: float
    matched_commands: frozenset[str]
    stage_trace: tuple[str, ...]

    @property
    def malicious(self) -> bool:
        return self.decision == MALICIOUS

    def to_record(self, sha256: str) -> dict:
        return {
            "sha256": sha256,
            "decision": self.decision,
            "reasons": list(self.reasons),
            "lambda_requested": self.lambda_requested,
            "lambda_api_related": self.lambda_api_related,
            "matched_commands": sorted(self.matched_commands),
            "stage_trace": list(self.stage_trace),
        }


# Stage predicates, usable on their own.

def blacklist_stage(profile, bl) -> bool:
    return bool(profile.api_string) and _bl.contains(bl, profile.serials)


def root_command_stage(profile) -> bool:
    return bool(profile.commands)


def sms_concealment_stage(profile) -> bool:
    return profile.sends_sms and profile.hides_sms


def likelihood_behavior_stage(profile, log_req: float, log_api: float, params: DetectorParams) -> bool:
    log_t = math.log(params.T_L)
    over = (log_req > log_t, log_api > log_t)
    permission_hit = any(over) if params.channel_rule == "or" else all(over)
    behavior_hit = profile.sends_sms or profile.sensitive_count >= params.sensitive_threshold
    if params.behavior_rule == "and":
        return permission_hit and behavior_hit
    return permission_hit or behavior_hit


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def detect(profile, bl, model, params: DetectorParams = DetectorParams()) -> Verdict:
    if profile.cfg_fingerprint != model.cfg_fingerprint:
        raise ConfigMismatch(f"profile {profile.sha256} and model use different configs")
    log_req = log_likelihood_ratio(model, profile.requested_critical, "requested")
    log_api = log_likelihood_ratio(model, profile.api_related_critical, "api_related")

    checks = (
        (BLACKLIST, lambda: blacklist_stage(profile, bl)),
        (ROOT_COMMAND, lambda: root_command_stage(profile)),
        (SMS_CONCEALMENT, lambda: sms_concealment_stage(profile)),
        (LIKELIHOOD_BEHAVIOR, lambda: likelihood_behavior_stage(profile, log_req, log_api, params)),
    )
    reasons = []
    trace = []
    for name, check in checks:
        trace.append(name)
        if check():
            reasons.append(name)
            if params.short_circuit:
                break
    return Verdict(
        decision=MALICIOUS if reasons else BENIGN,
        reasons=tuple(reasons),
        lambda_requested=_safe_exp(log_req),
        lambda_api_related=_safe_exp(log_api),
        log_lambda_requested=log_req,
        log_lambda_api_related=log_api,
        matched_commands=frozenset(profile.commands),
        stage_trace=tuple(trace),
    )


def detect_batch(profiles, bl, model, params: DetectorParams = DetectorParams(), workers: int = 1):
    """Detect every profile; returns ``[(sha256, Verdict | Exception), ...]`` in input order.

    A failure on one profile is returned in its slot instead of aborting the batch.
    """
    def one(p):
        try:
            return p.sha256, detect(p, bl, model, params)
        except Exception as exc:  # per-item failures are data, not control flow
            return p.sha256, exc

    profiles = list(profiles)
    if workers <= 1 or len(profiles) < 2:
        return [one(p) for p in profiles]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, profiles))


def verdict_line(sha256: str, verdict: Verdict) -> str:
    return json.dumps(verdict.to_record(sha256), sort_keys=False)
