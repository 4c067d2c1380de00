"""Multi-channel customer journeys with planted temporal causal rules.

The generator draws per-(user, domain) homogeneous Poisson event streams at
heterogeneous rates, then plants rules: whenever an event matches a rule's
trigger, the rule's intent fires inside a delay window with some
probability. Because the causal structure is known exactly, an oracle
predictor (bayes_recall_bound) gives the ceiling any learned model can be
judged against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import make_rng
from .timecal import day_of_week

ENROLLMENT_DOMAIN = "product_enrollment"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ContextEvent:
    user_id: str
    domain: str
    product: str
    timestamp: int
    field_name: str
    field_value: str | float


@dataclass(frozen=True)
class IntentRecord:
    user_id: str
    timestamp: int
    intent: str
    # provenance ("noise", "rule:<i>", "owned:<product>"); kept for test
    # oracles, never serialized
    source: str = "noise"


@dataclass(frozen=True)
class TriggerSpec:
    """Predicate over a single ContextEvent."""
    domain: str
    field_name: str
    value: str | None = None                       # exact categorical match
    value_range: tuple[float, float] | None = None  # numeric bucket [lo, hi)
    product: str | None = None
    day_of_week: int | None = None

    def matches(self, ev: ContextEvent) -> bool:
        if ev.domain != self.domain or ev.field_name != self.field_name:
            return False
        if self.value is not None and str(ev.field_value) != self.value:
            return False
        if self.value_range is not None:
            if isinstance(ev.field_value, str):
                return False
            lo, hi = self.value_range
            if not (lo <= float(ev.field_value) < hi):
                return False
        if self.product is not None and ev.product != self.product:
            return False
        if self.day_of_week is not None and day_of_week(ev.timestamp) != self.day_of_week:
            return False
        return True


@dataclass(frozen=True)
class PlantedRule:
    trigger: TriggerSpec
    effect_intent: str
    delay_window: tuple[int, int]  # seconds; effect lands strictly inside
    fire_probability: float

    def __post_init__(self):
        lo, hi = self.delay_window
        if lo > hi:
            raise ConfigError(f"delay window min {lo} exceeds max {hi}")
        if not (0.0 <= self.fire_probability <= 1.0):
            raise ConfigError(f"fire_probability {self.fire_probability} not in [0, 1]")
        if self.fire_probability > 0.0 and hi - lo < 2:
            raise ConfigError(
                "delay window needs max >= min + 2 so effects can land strictly inside")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str  # "categorical" | "numeric" | "id"
    values: tuple[str, ...] = ()
    weights: tuple[float, ...] = ()
    log_mean: float = 3.0
    log_sigma: float = 1.0
    present_prob: float = 1.0
    pool: int = 0  # id kind: values drawn as <name><i>, i < pool

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric", "id"):
            raise ConfigError(f"unknown field kind {self.kind!r}")
        if self.kind == "categorical" and not self.values:
            raise ConfigError(f"categorical field {self.name!r} needs values")
        if self.kind == "id" and self.pool < 1:
            raise ConfigError(f"id field {self.name!r} needs a positive pool")
        if self.weights and len(self.weights) != len(self.values):
            raise ConfigError(f"field {self.name!r}: weights/values length mismatch")


@dataclass(frozen=True)
class DomainSpec:
    name: str
    rate_per_day: float
    fields: tuple[FieldSpec, ...]


@dataclass(frozen=True)
class GeneratorConfig:
    n_users: int
    days: int
    products: tuple[str, ...]
    ownership_probs: dict[str, float]
    mid_enroll_prob: float
    domains: tuple[DomainSpec, ...]
    intents: tuple[str, ...]
    rules: tuple[PlantedRule, ...]
    noise_intents_per_day: float
    # product -> [intent, extra per-day rate while owned]
    ownership_intent_rates: dict[str, tuple[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if not self.rules:
            raise ConfigError("rule set must not be empty")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        names = {d.name for d in self.domains}
        for rule in self.rules:
            if rule.trigger.domain not in names:
                raise ConfigError(f"rule trigger domain {rule.trigger.domain!r} unknown")
            if rule.effect_intent not in self.intents:
                raise ConfigError(f"effect intent {rule.effect_intent!r} not in vocabulary")
        for prod, (intent, _rate) in self.ownership_intent_rates.items():
            if prod not in self.products:
                raise ConfigError(f"ownership intent product {prod!r} unknown")
            if intent not in self.intents:
                raise ConfigError(f"ownership intent {intent!r} not in vocabulary")

    @property
    def domain_registry(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.domains) + (ENROLLMENT_DOMAIN,)


def _sample_field_value(f: FieldSpec, rng) -> str | float:
    if f.kind == "categorical":
        if f.weights:
            idx = rng.choice(len(f.values), p=np.asarray(f.weights) / sum(f.weights))
        else:
            idx = rng.integers(len(f.values))
        return f.values[int(idx)]
    if f.kind == "id":
        return f"{f.name}{int(rng.integers(f.pool))}"
    return float(np.exp(rng.normal(f.log_mean, f.log_sigma)))


def generate_journeys(config: GeneratorConfig, seed: int):
    """Returns (events, intents, rules), each sorted per user by timestamp."""
    horizon = config.days * 86400
    all_events: list[ContextEvent] = []
    all_intents: list[IntentRecord] = []
    for u in range(config.n_users):
        rng = make_rng(seed, 1, u)
        uid = f"u{u:05d}"

        owned0 = [p for p in config.products
                  if rng.random() < config.ownership_probs.get(p, 0.0)]
        if not owned0:
            owned0 = [config.products[int(rng.integers(len(config.products)))]]
        enroll_at = {p: 0 for p in owned0}
        if config.mid_enroll_prob > 0 and rng.random() < config.mid_enroll_prob:
            rest = [p for p in config.products if p not in enroll_at]
            if rest:
                p = rest[int(rng.integers(len(rest)))]
                enroll_at[p] = int(rng.integers(1, horizon))

        def owned_at(t: int) -> list[str]:
            live = [p for p in config.products if enroll_at.get(p, horizon + 1) < t]
            return live if live else owned0

        events: list[ContextEvent] = []
        for p in config.products:
            if p in enroll_at:
                events.append(ContextEvent(uid, ENROLLMENT_DOMAIN, p,
                                           enroll_at[p], "action", "enroll"))
        for dom in config.domains:
            if dom.name == ENROLLMENT_DOMAIN:
                continue
            n_rows = int(rng.poisson(dom.rate_per_day * config.days))
            times = np.sort(rng.integers(1, horizon, size=n_rows))
            for t in times:
                owned = owned_at(int(t))
                product = owned[int(rng.integers(len(owned)))]
                for f in dom.fields:
                    if f.present_prob < 1.0 and rng.random() >= f.present_prob:
                        continue
                    events.append(ContextEvent(uid, dom.name, product, int(t),
                                               f.name, _sample_field_value(f, rng)))
        events.sort(key=lambda e: e.timestamp)

        intents: list[IntentRecord] = []
        for ev in events:
            for ri, rule in enumerate(config.rules):
                if rule.trigger.matches(ev) and rng.random() < rule.fire_probability:
                    lo, hi = rule.delay_window
                    delay = int(rng.integers(lo + 1, hi))
                    intents.append(IntentRecord(uid, ev.timestamp + delay,
                                                rule.effect_intent, f"rule:{ri}"))
        n_noise = int(rng.poisson(config.noise_intents_per_day * config.days))
        for t in rng.integers(1, horizon, size=n_noise):
            label = config.intents[int(rng.integers(len(config.intents)))]
            intents.append(IntentRecord(uid, int(t), label, "noise"))
        for prod, (label, rate) in sorted(config.ownership_intent_rates.items()):
            start = enroll_at.get(prod)
            if start is None:
                continue
            span_days = (horizon - start) / 86400.0
            n_extra = int(rng.poisson(rate * span_days))
            for t in rng.integers(start + 1, horizon, size=n_extra):
                intents.append(IntentRecord(uid, int(t), label, f"owned:{prod}"))
        intents.sort(key=lambda r: (r.timestamp, r.intent, r.source))

        all_events.extend(events)
        all_intents.extend(intents)
    return all_events, all_intents, list(config.rules)


# ---------------------------------------------------------------------------
# oracle predictor
# ---------------------------------------------------------------------------

def bayes_recall_bound(config: GeneratorConfig, events, intents, k: int,
                       time_range: tuple[int, int] | None = None) -> float:
    """Recall@k of the rule-aware oracle.

    The oracle sees the true rules and rates, scores every label by its
    arrival intensity at each intent's (known) timestamp, and consumes
    pending triggers greedily as their effects are observed. No learned
    model should beat it systematically.
    """
    labels = list(config.intents)
    label_idx = {c: i for i, c in enumerate(labels)}
    n_labels = len(labels)
    noise_per_sec = config.noise_intents_per_day / 86400.0 / n_labels

    by_user_events: dict[str, list[ContextEvent]] = {}
    for ev in events:
        by_user_events.setdefault(ev.user_id, []).append(ev)
    by_user_intents: dict[str, list[IntentRecord]] = {}
    for rec in intents:
        by_user_intents.setdefault(rec.user_id, []).append(rec)

    hits = 0
    total = 0
    for uid, recs in by_user_intents.items():
        triggers: list[tuple[int, int]] = []  # (rule index, trigger time)
        enroll_at: dict[str, int] = {}
        for ev in by_user_events.get(uid, []):
            if ev.domain == ENROLLMENT_DOMAIN:
                enroll_at[ev.product] = min(ev.timestamp,
                                            enroll_at.get(ev.product, ev.timestamp))
            for ri, rule in enumerate(config.rules):
                if rule.trigger.matches(ev):
                    triggers.append((ri, ev.timestamp))
        triggers.sort(key=lambda x: x[1])
        consumed = [False] * len(triggers)

        for rec in sorted(recs, key=lambda r: (r.timestamp, r.intent)):
            t = rec.timestamp
            intensity = np.full(n_labels, noise_per_sec)
            for prod, (label, rate) in config.ownership_intent_rates.items():
                if enroll_at.get(prod, t + 1) < t:
                    intensity[label_idx[label]] += rate / 86400.0
            pending: list[int] = []
            for idx, (ri, te) in enumerate(triggers):
                if te + config.rules[ri].delay_window[1] < t:
                    continue
                if consumed[idx]:
                    continue
                lo, hi = config.rules[ri].delay_window
                if te + lo < t < te + hi:
                    pending.append(idx)
                    width = hi - lo - 1  # integer delays strictly inside
                    intensity[label_idx[config.rules[ri].effect_intent]] += (
                        config.rules[ri].fire_probability / width)
            order = np.lexsort((np.arange(n_labels), -intensity))
            in_range = time_range is None or (time_range[0] <= t < time_range[1])
            if in_range:
                total += 1
                if rec.intent in labels and label_idx[rec.intent] in order[:k]:
                    hits += 1
            for idx in pending:
                ri = triggers[idx][0]
                if config.rules[ri].effect_intent == rec.intent:
                    consumed[idx] = True
                    break
    if total == 0:
        raise ValueError("bayes_recall_bound: no intents in scoring range")
    return hits / total


def expected_rule_fraction(config: GeneratorConfig) -> float:
    """Analytic expectation of the fraction of intents caused by rules.

    Valid for configs without product- or ownership-conditioned triggers
    (the bundled default qualifies); used by the Monte-Carlo generator test.
    """
    by_name = {d.name: d for d in config.domains}
    caused = 0.0
    for rule in config.rules:
        dom = by_name[rule.trigger.domain]
        fspec = next(f for f in dom.fields if f.name == rule.trigger.field_name)
        p_match = fspec.present_prob
        if rule.trigger.value is not None:
            if fspec.weights:
                w = dict(zip(fspec.values, fspec.weights))
                p_match *= w[rule.trigger.value] / sum(fspec.weights)
            else:
                p_match *= 1.0 / len(fspec.values)
        if rule.trigger.value_range is not None:
            lo, hi = rule.trigger.value_range
            z = lambda x: 0.5 * (1 + math.erf(
                (math.log(x) - fspec.log_mean) / (fspec.log_sigma * math.sqrt(2))))
            p_match *= (z(hi) if math.isfinite(hi) else 1.0) - (z(lo) if lo > 0 else 0.0)
        if rule.trigger.day_of_week is not None:
            p_match /= 7.0
        if rule.trigger.product is not None:
            raise ValueError("analytic expectation undefined for product triggers")
        caused += dom.rate_per_day * config.days * p_match * rule.fire_probability
    noise = config.noise_intents_per_day * config.days
    extra = 0.0
    for prod, (_label, rate) in config.ownership_intent_rates.items():
        p_own = config.ownership_probs.get(prod, 0.0)
        extra += p_own * rate * config.days  # enrollment at t=0 dominates
    return caused / (caused + noise + extra)


def expected_stream_event_count(config: GeneratorConfig) -> float:
    """Expected number of non-enrollment field observations."""
    total = 0.0
    for dom in config.domains:
        per_row = sum(f.present_prob for f in dom.fields)
        total += dom.rate_per_day * config.days * per_row
    return total * config.n_users


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_journeys(out_dir, config: GeneratorConfig, events, intents) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "events.jsonl", "w") as fh:
        for ev in events:
            fh.write(json.dumps({
                "user_id": ev.user_id, "domain": ev.domain, "product": ev.product,
                "timestamp": ev.timestamp, "field_name": ev.field_name,
                "field_value": ev.field_value}, sort_keys=True) + "\n")
    with open(out / "intents.jsonl", "w") as fh:
        for rec in intents:
            fh.write(json.dumps({
                "user_id": rec.user_id, "timestamp": rec.timestamp,
                "intent": rec.intent}, sort_keys=True) + "\n")
    with open(out / "rules.json", "w") as fh:
        json.dump(generator_config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_journeys(data_dir):
    data = Path(data_dir)
    events = []
    with open(data / "events.jsonl") as fh:
        for line in fh:
            d = json.loads(line)
            events.append(ContextEvent(d["user_id"], d["domain"], d["product"],
                                       int(d["timestamp"]), d["field_name"],
                                       d["field_value"]))
    intents = []
    with open(data / "intents.jsonl") as fh:
        for line in fh:
            d = json.loads(line)
            intents.append(IntentRecord(d["user_id"], int(d["timestamp"]), d["intent"]))
    with open(data / "rules.json") as fh:
        config = generator_config_from_dict(json.load(fh))
    return events, intents, config


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def generator_config_to_dict(config: GeneratorConfig) -> dict:
    return {
        "n_users": config.n_users,
        "days": config.days,
        "products": list(config.products),
        "ownership_probs": dict(config.ownership_probs),
        "mid_enroll_prob": config.mid_enroll_prob,
        "domains": [{
            "name": d.name, "rate_per_day": d.rate_per_day,
            "fields": [{k: v for k, v in {
                "name": f.name, "kind": f.kind,
                "values": list(f.values) if f.values else None,
                "weights": list(f.weights) if f.weights else None,
                "log_mean": f.log_mean if f.kind == "numeric" else None,
                "log_sigma": f.log_sigma if f.kind == "numeric" else None,
                "present_prob": f.present_prob if f.present_prob < 1.0 else None,
                "pool": f.pool if f.kind == "id" else None,
            }.items() if v is not None} for f in d.fields],
        } for d in config.domains],
        "intents": list(config.intents),
        "rules": [{
            "trigger": {k: v for k, v in {
                "domain": r.trigger.domain, "field_name": r.trigger.field_name,
                "value": r.trigger.value,
                "value_range": (None if r.trigger.value_range is None else
                                [r.trigger.value_range[0],
                                 None if not math.isfinite(r.trigger.value_range[1])
                                 else r.trigger.value_range[1]]),
                "product": r.trigger.product,
                "day_of_week": r.trigger.day_of_week,
            }.items() if v is not None},
            "effect_intent": r.effect_intent,
            "delay_window": list(r.delay_window),
            "fire_probability": r.fire_probability,
        } for r in config.rules],
        "noise_intents_per_day": config.noise_intents_per_day,
        "ownership_intent_rates": {p: list(v) for p, v in
                                   config.ownership_intent_rates.items()},
    }


def generator_config_from_dict(d: dict) -> GeneratorConfig:
    _reject_unknown(d, {"n_users", "days", "products", "ownership_probs",
                        "mid_enroll_prob", "domains", "intents", "rules",
                        "noise_intents_per_day", "ownership_intent_rates"},
                    "generator")
    domains = []
    for dd in d["domains"]:
        _reject_unknown(dd, {"name", "rate_per_day", "fields"}, "generator.domains")
        fields = []
        for fd in dd["fields"]:
            _reject_unknown(fd, {"name", "kind", "values", "weights", "log_mean",
                                 "log_sigma", "present_prob", "pool"},
                            f"field {fd.get('name')}")
            fields.append(FieldSpec(
                name=fd["name"], kind=fd["kind"],
                values=tuple(fd.get("values") or ()),
                weights=tuple(fd.get("weights") or ()),
                log_mean=fd.get("log_mean", 3.0),
                log_sigma=fd.get("log_sigma", 1.0),
                present_prob=fd.get("present_prob", 1.0),
                pool=fd.get("pool", 0)))
        domains.append(DomainSpec(dd["name"], dd["rate_per_day"], tuple(fields)))
    rules = []
    for rd in d["rules"]:
        _reject_unknown(rd, {"trigger", "effect_intent", "delay_window",
                             "fire_probability"}, "rule")
        td = rd["trigger"]
        _reject_unknown(td, {"domain", "field_name", "value", "value_range",
                             "product", "day_of_week"}, "trigger")
        vr = td.get("value_range")
        if vr is not None:
            vr = (float(vr[0]), math.inf if vr[1] is None else float(vr[1]))
        rules.append(PlantedRule(
            trigger=TriggerSpec(domain=td["domain"], field_name=td["field_name"],
                                value=td.get("value"), value_range=vr,
                                product=td.get("product"),
                                day_of_week=td.get("day_of_week")),
            effect_intent=rd["effect_intent"],
            delay_window=tuple(int(x) for x in rd["delay_window"]),
            fire_probability=float(rd["fire_probability"])))
    return GeneratorConfig(
        n_users=int(d["n_users"]), days=int(d["days"]),
        products=tuple(d["products"]),
        ownership_probs=dict(d["ownership_probs"]),
        mid_enroll_prob=float(d.get("mid_enroll_prob", 0.0)),
        domains=tuple(domains), intents=tuple(d["intents"]),
        rules=tuple(rules),
        noise_intents_per_day=float(d["noise_intents_per_day"]),
        ownership_intent_rates={p: (v[0], float(v[1])) for p, v in
                                d.get("ownership_intent_rates", {}).items()})


# ---------------------------------------------------------------------------
# bundled vocabularies and configs
# ---------------------------------------------------------------------------

INTENTS = (
    "make_payment", "report_fraud", "cancel_zelle_payment", "redeem_rewards",
    "add_external_account", "enroll_paperless", "apply_contactless_card",
    "inquire_benefits", "cancel_balance_transfer", "update_birthday",
    "dispute_transaction", "increase_credit_limit", "activate_card",
    "replace_card", "update_address", "check_balance", "close_account",
    "setup_autopay", "transfer_funds", "request_statement",
)

PRODUCTS = ("card_a", "card_b", "deposit")


def default_generator_config(n_users: int = 200, days: int = 56) -> GeneratorConfig:
    """Ladder dataset: five plain rules with analytically known trigger rates."""
    domains = (
        DomainSpec("transactions", 0.5, (
            FieldSpec("amount", "numeric", log_mean=3.5, log_sigma=1.0),
            FieldSpec("merchant_category", "categorical",
                      ("grocery", "travel", "dining", "retail", "fuel", "online")),
            FieldSpec("channel", "categorical", ("pos", "online", "atm")),
        )),
        DomainSpec("payments", 0.12, (
            FieldSpec("amount", "numeric", log_mean=4.5, log_sigma=0.8),
            FieldSpec("method", "categorical", ("autopay", "manual", "phone")),
            FieldSpec("status", "categorical", ("posted", "returned"),
                      weights=(0.85, 0.15)),
        )),
        DomainSpec("rewards", 0.15, (
            FieldSpec("points", "numeric", log_mean=3.0, log_sigma=1.2),
            FieldSpec("activity", "categorical", ("earn", "redeem")),
        )),
        DomainSpec("outbound_messages", 0.3, (
            FieldSpec("topic", "categorical",
                      ("statement", "promo", "payment_reminder", "fraud_alert")),
            FieldSpec("channel", "categorical", ("email", "sms", "push")),
        )),
    )
    rules = (
        PlantedRule(TriggerSpec("outbound_messages", "topic", value="payment_reminder"),
                    "make_payment", (3600, 172800), 0.9),
        PlantedRule(TriggerSpec("transactions", "merchant_category", value="travel"),
                    "redeem_rewards", (3600, 259200), 0.9),
        PlantedRule(TriggerSpec("outbound_messages", "topic", value="fraud_alert"),
                    "report_fraud", (600, 86400), 0.9),
        PlantedRule(TriggerSpec("transactions", "amount", value_range=(150.0, math.inf)),
                    "dispute_transaction", (1800, 129600), 0.9),
        PlantedRule(TriggerSpec("payments", "method", value="autopay", day_of_week=4),
                    "check_balance", (3600, 129600), 0.9),
    )
    return GeneratorConfig(
        n_users=n_users, days=days, products=PRODUCTS,
        ownership_probs={"card_a": 0.7, "card_b": 0.45, "deposit": 0.35},
        mid_enroll_prob=0.15, domains=domains, intents=INTENTS, rules=rules,
        noise_intents_per_day=0.25)


def ablation_generator_config(n_users: int = 160, days: int = 48) -> GeneratorConfig:
    """Feature-ablation dataset.

    Two rules fire on the mere presence of sparse high-churn fields whose
    values are almost always out-of-vocabulary at test time, so the field
    name embedding is the only reliable way to see them. Two more rules are
    product-conditional, so the encoder product embedding is load-bearing.
    No calendar-keyed rules: the time-encoder ablations act as the
    no-signal controls.
    """
    domains = (
        DomainSpec("transactions", 0.55, (
            FieldSpec("amount", "numeric", log_mean=3.5, log_sigma=1.0),
            FieldSpec("merchant_name", "id", pool=50000, present_prob=0.5),
            FieldSpec("channel", "categorical", ("pos", "online", "atm")),
            FieldSpec("dispute_code", "id", pool=50000, present_prob=0.14),
        )),
        DomainSpec("payments", 0.12, (
            FieldSpec("amount", "numeric", log_mean=4.5, log_sigma=0.8),
            FieldSpec("method", "categorical", ("autopay", "manual", "phone")),
        )),
        DomainSpec("outbound_messages", 0.3, (
            FieldSpec("topic", "categorical", ("statement", "promo", "offer")),
            FieldSpec("case_ref", "id", pool=50000, present_prob=0.14),
        )),
    )
    rules = (
        PlantedRule(TriggerSpec("transactions", "dispute_code"),
                    "dispute_transaction", (3600, 172800), 0.9),
        PlantedRule(TriggerSpec("outbound_messages", "case_ref"),
                    "inquire_benefits", (3600, 172800), 0.9),
        PlantedRule(TriggerSpec("transactions", "channel", value="atm",
                                product="card_b"),
                    "activate_card", (3600, 172800), 0.9),
        PlantedRule(TriggerSpec("transactions", "channel", value="atm",
                                product="card_a"),
                    "replace_card", (3600, 172800), 0.9),
        PlantedRule(TriggerSpec("payments", "method", value="phone",
                                product="deposit"),
                    "transfer_funds", (3600, 172800), 0.9),
    )
    return GeneratorConfig(
        n_users=n_users, days=days, products=PRODUCTS,
        ownership_probs={"card_a": 0.55, "card_b": 0.55, "deposit": 0.5},
        mid_enroll_prob=0.0, domains=domains, intents=INTENTS, rules=rules,
        noise_intents_per_day=0.22,
        ownership_intent_rates={"deposit": ("transfer_funds", 0.05)})
