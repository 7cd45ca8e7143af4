"""Synthetic enterprise-style event logs with controllable structure.

A session grammar walks between pages; each page visit emits its template
of event tokens (the page itself, then its API/asset requests).  Long-range
rules plant dependencies that only wide-context models can exploit, and
injectors corrupt a stream with labeled anomalies for detector evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .extractor import EventVocabulary, RANDOM_ELEMENT
from .ingest import RawRequest

_TOKEN_PARTS = 3


@dataclass(frozen=True)
class LongRangeRule:
    """Every emitted ``trigger`` token forces ``forced`` at +distance."""

    trigger: str
    forced: str
    distance: int


@dataclass
class SessionGrammar:
    pages: dict[str, list[str]]
    transitions: dict[str, list[tuple[str, float]]]
    noise_rate: float = 0.0
    long_range: list[LongRangeRule] = field(default_factory=list)
    start_page: str | None = None

    def validate(self) -> None:
        if not self.pages:
            raise ValidationError("grammar has no pages")
        for name, template in self.pages.items():
            if not template:
                raise ValidationError(f"page {name!r} has an empty template")
            for token in template:
                parts = token.split(" ")
                if (
                    len(parts) != _TOKEN_PARTS
                    or not parts[1].startswith("/")
                    or not parts[2].isdigit()
                ):
                    raise ValidationError(
                        f"page {name!r} token {token!r} is not 'METHOD /path N'"
                    )
        for name, edges in self.transitions.items():
            if name not in self.pages:
                raise ValidationError(f"transition from unknown page {name!r}")
            for target, _ in edges:
                if target not in self.pages:
                    raise ValidationError(f"transition to unknown page {target!r}")
            total = sum(p for _, p in edges)
            if not math.isclose(total, 1.0, abs_tol=1e-9):
                raise ValidationError(
                    f"transition probabilities from {name!r} sum to {total}"
                )
        for name in self.pages:
            if name not in self.transitions:
                raise ValidationError(f"page {name!r} has no outgoing transitions")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValidationError("noise_rate must lie in [0, 1)")
        triggers = {rule.trigger for rule in self.long_range}
        for rule in self.long_range:
            if rule.distance < 2:
                raise ValidationError("long-range distances must be >= 2")
            if rule.forced in triggers:
                raise ValidationError("a forced token must not itself be a trigger")
        if triggers and not (self.token_pool() - triggers):
            raise ValidationError("grammar needs non-trigger tokens for substitution")
        if self.start_page is not None and self.start_page not in self.pages:
            raise ValidationError(f"unknown start page {self.start_page!r}")

    def token_pool(self) -> set[str]:
        return {token for template in self.pages.values() for token in template}

    def unique_tokens(self) -> list[str]:
        seen = self.token_pool() | {rule.forced for rule in self.long_range}
        return sorted(seen)


def _rules_by_trigger(grammar: SessionGrammar) -> dict[str, list[LongRangeRule]]:
    by_trigger: dict[str, list[LongRangeRule]] = {}
    for rule in grammar.long_range:
        by_trigger.setdefault(rule.trigger, []).append(rule)
    return by_trigger


def generate_tokens(
    grammar: SessionGrammar, total: int, seed: int
) -> list[str]:
    """Deterministic token stream of the requested length.

    Long-range rules hold unconditionally over the emitted stream: a
    trigger whose forced slot would fall beyond the end, or collide with
    an already-scheduled different token, is replaced by a non-trigger
    substitute drawn from the page pool.
    """
    grammar.validate()
    rng = np.random.default_rng(seed)
    rules = _rules_by_trigger(grammar)
    pool = sorted(grammar.token_pool())
    non_trigger_pool = sorted(grammar.token_pool() - set(rules))
    page_names = sorted(grammar.pages)
    page = grammar.start_page or page_names[0]
    queue: list[str] = list(grammar.pages[page])
    out: list[str] = []
    pending: dict[int, str] = {}
    while len(out) < total:
        position = len(out)
        if position in pending:
            out.append(pending.pop(position))
            continue
        if grammar.noise_rate > 0.0 and rng.random() < grammar.noise_rate:
            token = pool[rng.integers(0, len(pool))]
        else:
            if not queue:
                edges = grammar.transitions[page]
                probs = np.array([p for _, p in edges])
                page = edges[rng.choice(len(edges), p=probs / probs.sum())][0]
                queue = list(grammar.pages[page])
            token = queue.pop(0)
        page_rules = rules.get(token)
        if page_rules:
            feasible = all(
                position + rule.distance < total
                and pending.get(position + rule.distance, rule.forced) == rule.forced
                for rule in page_rules
            )
            if feasible:
                for rule in page_rules:
                    pending[position + rule.distance] = rule.forced
            else:
                token = non_trigger_pool[rng.integers(0, len(non_trigger_pool))]
        out.append(token)
    return out


def token_to_request(
    token: str,
    timestamp: datetime,
    app_id: str = "synthetic",
    actor_id: str | None = None,
    randomizer: np.random.Generator | None = None,
) -> RawRequest:
    """Materialize a canonical token back into a raw request.

    With a ``randomizer``, each RANDOM path element becomes a fresh random
    identifier so the extractor has real derandomization work to do.
    """
    method, path, count = token.split(" ")
    if randomizer is not None and RANDOM_ELEMENT in path:
        chars = np.array(list("abcdefghijklmnopqrstuvwxyz0123456789"))
        elements = [
            "".join(randomizer.choice(chars, size=10)) if e == RANDOM_ELEMENT else e
            for e in path.split("/")
        ]
        path = "/".join(elements)
    return RawRequest(
        timestamp=timestamp,
        method=method,
        path=path,
        query_param_count=int(count),
        app_id=app_id,
        actor_id=actor_id,
    )


def generate(
    grammar: SessionGrammar,
    days: int,
    events_per_day: int,
    seed: int,
    start_day: date = date(2020, 1, 6),
    app_id: str = "synthetic",
) -> list[RawRequest]:
    """Labeled request log spread over ``days`` distinct calendar dates."""
    if days < 1 or events_per_day < 1:
        raise ValidationError("days and events_per_day must be positive")
    tokens = generate_tokens(grammar, days * events_per_day, seed)
    randomizer = np.random.default_rng(seed + 1)
    workday = 8 * 3600.0
    requests = []
    for index, token in enumerate(tokens):
        day, slot = divmod(index, events_per_day)
        ts = datetime.combine(
            start_day + timedelta(days=day), datetime.min.time(), tzinfo=timezone.utc
        ) + timedelta(hours=9, seconds=workday * slot / events_per_day)
        requests.append(
            token_to_request(token, ts, app_id=app_id, randomizer=randomizer)
        )
    return requests


@dataclass(frozen=True)
class InjectionLabel:
    position: int  # index into the corrupted stream
    kind: str      # random | attack
    token: str


def remove_labeled(tokens: Sequence[str], labels: Sequence[InjectionLabel]) -> list[str]:
    """Drop labeled positions; inverse of any injector."""
    flagged = {label.position for label in labels}
    return [t for i, t in enumerate(tokens) if i not in flagged]


def _insert_at_slots(
    tokens: Sequence[str], slots: np.ndarray, inserted: list[str], kind: str
) -> tuple[list[str], list[InjectionLabel]]:
    order = np.argsort(slots, kind="stable")
    out = list(tokens)
    labels = []
    for offset, j in enumerate(order):
        position = int(slots[j]) + offset
        out.insert(position, inserted[j])
        labels.append(InjectionLabel(position=position, kind=kind, token=inserted[j]))
    return out, labels


def inject_random(
    tokens: Sequence[str], rate: float, vocab: EventVocabulary, seed: int
) -> tuple[list[str], list[InjectionLabel]]:
    """Insert ceil(rate*|log|) vocabulary tokens at uniform positions."""
    if not 0.0 < rate < 1.0:
        raise ValidationError("injection rate must lie in (0, 1)")
    normal_tokens = vocab.id_to_token[3:]
    if not normal_tokens:
        raise ValidationError("vocabulary has no normal tokens to inject")
    rng = np.random.default_rng(seed)
    count = max(1, int(math.ceil(rate * len(tokens))))
    slots = rng.integers(0, len(tokens) + 1, size=count)
    drawn = [normal_tokens[i] for i in rng.integers(0, len(normal_tokens), size=count)]
    return _insert_at_slots(tokens, slots, drawn, "random")


# Admin/scanner paths no enterprise grammar emits; they fold to RARE under
# any vocabulary built from clean training data.
SCANNER_PATHS = (
    "/remote/login/console",
    "/setup/config/install",
    "/backup/database/dump",
    "/phpmyadmin/scripts/setup",
    "/wp/admin/install",
    "/cgi/bin/test",
    "/owa/auth/logon",
    "/manager/html/upload",
    "/jmx/console/invoke",
    "/web/console/exec",
    "/struts/action/debug",
    "/solr/admin/cores",
    "/api/debug/trace",
    "/env/config/secrets",
    "/git/config/head",
    "/hidden/shell/cmd",
    "/vendor/composer/installed",
    "/actuator/env/reveal",
    "/console/portal/admin",
    "/telescope/requests/log",
)

ATTACK_KINDS = ("scanner_burst", "exploit_probe")


def inject_attack(
    tokens: Sequence[str],
    kind: str,
    seed: int,
    burst_length: int = 20,
    probe_count: int = 5,
) -> tuple[list[str], list[InjectionLabel]]:
    """Insert an attack-style trace.

    ``scanner_burst``: a contiguous run of never-seen-path requests (they
    encode to RARE).  ``exploit_probe``: scattered single tokens that are
    known in the stream but appear out of context.
    """
    if not tokens:
        raise ValidationError("cannot inject into an empty stream")
    rng = np.random.default_rng(seed)
    if kind == "scanner_burst":
        start = int(rng.integers(0, len(tokens) + 1))
        burst = [
            f"GET {SCANNER_PATHS[i % len(SCANNER_PATHS)]} 0"
            for i in range(burst_length)
        ]
        out = list(tokens)
        out[start:start] = burst
        labels = [
            InjectionLabel(position=start + i, kind="attack", token=burst[i])
            for i in range(burst_length)
        ]
        return out, labels
    if kind == "exploit_probe":
        known = sorted(set(tokens))
        slots = rng.integers(0, len(tokens) + 1, size=probe_count)
        drawn = [known[i] for i in rng.integers(0, len(known), size=probe_count)]
        return _insert_at_slots(tokens, slots, drawn, "attack")
    raise ValidationError(f"unknown attack kind {kind!r}")


def write_labels(labels: Sequence[InjectionLabel], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for label in sorted(labels, key=lambda l: l.position):
            handle.write(f"{label.position}\t{label.kind}\n")


def read_labels(path) -> list[tuple[int, str]]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            position, kind = line.rstrip("\n").split("\t")
            out.append((int(position), kind))
    return out


def default_grammar() -> SessionGrammar:
    """Workqueue-style application: ~100 unique events, mild noise.

    Asset and API requests inside a page are deterministic; branching
    happens at page boundaries, mirroring how one user action fans out
    into a predictable burst of requests.
    """
    pages = {
        "login": [
            "GET /login 0",
            "POST /login 2",
            "GET /static/styles/main 0",
            "GET /static/scripts/app 0",
            "GET /static/styles/theme 0",
        ],
        "dashboard": [
            "GET /dashboard 0",
            "GET /api/user/profile 0",
            "GET /api/queue/summary 1",
            "GET /api/alerts/recent 2",
            "GET /static/images/logo 0",
            "GET /static/styles/dashboard 0",
            "GET /api/queue/backlog 1",
        ],
        "queue_list": [
            "GET /queue/list 2",
            "GET /api/queue/items 3",
            "GET /api/queue/count 1",
            "GET /api/queue/filters 2",
            "GET /static/queue/table 0",
        ],
        "queue_item": [
            "GET /queue/item 1",
            "GET /api/item/details 2",
            "GET /api/item/history 1",
            "POST /api/item/claim 1",
            "GET /static/item/panel 0",
        ],
        "job_detail": [
            "GET /jobs/RANDOM/log 0",
            "GET /api/jobs/RANDOM/status 1",
            "GET /api/jobs/RANDOM/artifacts 2",
        ],
        "submit": [
            "GET /submit/form 0",
            "GET /api/form/fields 1",
            "GET /static/forms/validate 0",
            "POST /api/submit/task 4",
            "GET /submit/confirm 1",
        ],
        "search": [
            "GET /search 1",
            "GET /api/search/results 3",
            "GET /api/search/facets 2",
            "GET /static/search/box 0",
        ],
        "report": [
            "GET /report/view 1",
            "GET /api/report/data 3",
            "GET /api/report/chart 2",
            "GET /api/report/export 2",
            "GET /static/charts/render 0",
        ],
        "settings": [
            "GET /settings 0",
            "GET /api/user/preferences 0",
            "POST /api/user/preferences 3",
        ],
        "profile": [
            "GET /profile 0",
            "GET /api/user/activity 2",
            "GET /static/images/avatar 1",
            "POST /api/profile/update 5",
        ],
        "help": [
            "GET /help/index 0",
            "GET /help/articles 1",
            "GET /static/help/content 0",
        ],
        "upload": [
            "GET /upload/form 0",
            "POST /api/upload/file 2",
            "GET /api/upload/status 1",
            "GET /static/upload/widget 0",
        ],
        "admin_tasks": [
            "GET /admin/tasks 1",
            "GET /api/tasks/pending 2",
            "POST /api/tasks/assign 3",
            "GET /api/tasks/metrics 1",
            "GET /static/admin/menu 0",
        ],
        "browse_data": [
            "GET /data/browse 2",
            "GET /api/data/tables 1",
            "GET /api/data/preview 3",
            "GET /api/data/schema 1",
            "GET /static/data/grid 0",
        ],
        "export": [
            "GET /export/options 0",
            "POST /api/export/start 3",
            "GET /api/export/progress 1",
            "GET /api/export/download 1",
            "GET /static/export/dialog 0",
        ],
        "notify": [
            "GET /notifications 0",
            "POST /api/notifications/read 1",
            "GET /api/notifications/count 0",
        ],
        "calendar": [
            "GET /calendar 1",
            "GET /api/calendar/events 2",
            "POST /api/calendar/create 4",
            "GET /static/calendar/widget 0",
        ],
        "messages": [
            "GET /messages/inbox 0",
            "GET /api/messages/list 2",
            "POST /api/messages/send 3",
            "GET /static/messages/compose 0",
        ],
        "team": [
            "GET /team/overview 0",
            "GET /api/team/members 1",
            "GET /api/team/workload 2",
            "GET /static/team/grid 0",
        ],
        "audit": [
            "GET /audit/trail 2",
            "GET /api/audit/entries 3",
            "GET /api/audit/filters 1",
            "GET /static/audit/view 0",
        ],
        "archive": [
            "GET /archive/list 1",
            "GET /api/archive/items 2",
            "POST /api/archive/restore 1",
            "GET /static/archive/list 0",
        ],
        "metrics": [
            "GET /metrics/board 0",
            "GET /api/metrics/series 3",
            "GET /api/metrics/summary 1",
            "GET /static/charts/axis 0",
        ],
        "status_page": [
            "GET /status/overview 0",
            "GET /api/status/services 1",
            "GET /api/status/history 2",
        ],
        "logout": [
            "POST /logout 0",
            "GET /login 0",
        ],
    }
    transitions = {
        "login": [("dashboard", 0.8), ("queue_list", 0.2)],
        "dashboard": [
            ("queue_list", 0.3),
            ("search", 0.15),
            ("report", 0.15),
            ("notify", 0.1),
            ("messages", 0.1),
            ("browse_data", 0.1),
            ("metrics", 0.1),
        ],
        "queue_list": [
            ("queue_item", 0.55),
            ("search", 0.15),
            ("dashboard", 0.2),
            ("submit", 0.1),
        ],
        "queue_item": [
            ("queue_list", 0.4),
            ("job_detail", 0.25),
            ("report", 0.15),
            ("dashboard", 0.2),
        ],
        "job_detail": [("queue_item", 0.5), ("queue_list", 0.3), ("dashboard", 0.2)],
        "submit": [("queue_list", 0.6), ("dashboard", 0.3), ("upload", 0.1)],
        "search": [
            ("queue_item", 0.35),
            ("browse_data", 0.25),
            ("dashboard", 0.25),
            ("help", 0.15),
        ],
        "report": [("export", 0.3), ("dashboard", 0.4), ("metrics", 0.3)],
        "settings": [("dashboard", 0.7), ("profile", 0.3)],
        "profile": [("dashboard", 0.6), ("settings", 0.4)],
        "help": [("dashboard", 0.7), ("search", 0.3)],
        "upload": [("browse_data", 0.4), ("dashboard", 0.4), ("submit", 0.2)],
        "admin_tasks": [("dashboard", 0.5), ("team", 0.3), ("audit", 0.2)],
        "browse_data": [
            ("export", 0.25),
            ("upload", 0.15),
            ("dashboard", 0.35),
            ("search", 0.25),
        ],
        "export": [("browse_data", 0.4), ("dashboard", 0.6)],
        "notify": [("dashboard", 0.6), ("messages", 0.4)],
        "calendar": [("dashboard", 0.7), ("team", 0.3)],
        "messages": [("dashboard", 0.5), ("notify", 0.3), ("team", 0.2)],
        "team": [("dashboard", 0.5), ("admin_tasks", 0.3), ("calendar", 0.2)],
        "audit": [("admin_tasks", 0.5), ("dashboard", 0.5)],
        "archive": [("browse_data", 0.5), ("dashboard", 0.5)],
        "metrics": [("report", 0.3), ("dashboard", 0.5), ("status_page", 0.2)],
        "status_page": [("dashboard", 0.8), ("metrics", 0.2)],
        "logout": [("login", 1.0)],
    }
    return SessionGrammar(
        pages=pages,
        transitions=transitions,
        noise_rate=0.01,
        start_page="login",
    )


def deterministic_grammar() -> SessionGrammar:
    """Five pages in a fixed cycle, 20 unique events, no noise.

    Every next event is a deterministic function of the recent context, so
    a sequence model can approach perfect accuracy; useful as a learnability
    benchmark with a known ceiling.
    """
    pages = {
        "alpha": [
            "GET /alpha/home 0",
            "GET /api/alpha/data 1",
            "GET /static/alpha/style 0",
            "GET /api/alpha/detail 2",
        ],
        "bravo": [
            "GET /bravo/home 0",
            "GET /api/bravo/data 1",
            "GET /static/bravo/style 0",
            "GET /api/bravo/detail 2",
        ],
        "charlie": [
            "GET /charlie/home 0",
            "GET /api/charlie/data 1",
            "GET /static/charlie/style 0",
            "GET /api/charlie/detail 2",
        ],
        "delta": [
            "GET /delta/home 0",
            "GET /api/delta/data 1",
            "GET /static/delta/style 0",
            "GET /api/delta/detail 2",
        ],
        "echo": [
            "GET /echo/home 0",
            "GET /api/echo/data 1",
            "GET /static/echo/style 0",
            "GET /api/echo/detail 2",
        ],
    }
    cycle = ["alpha", "bravo", "charlie", "delta", "echo"]
    transitions = {
        name: [(cycle[(i + 1) % len(cycle)], 1.0)] for i, name in enumerate(cycle)
    }
    return SessionGrammar(pages=pages, transitions=transitions, start_page="alpha")


def planted_dependency_grammar(
    branching: int = 4, distance: int = 10, trigger_rate: float = 0.15
) -> SessionGrammar:
    """Uniform filler traffic with trigger->dependent pairs at a distance.

    A trigger page variant j forces a shared cue token at distance-1 and
    its matching dependent token at ``distance``.  Local context at the
    dependent slot reveals only that *some* dependent follows (the cue),
    so short-context models are stuck at 1/branching; the trigger identity
    sits ``distance`` positions back.
    """
    if not 2 <= branching <= 8:
        raise ValidationError("branching must lie in [2, 8]")
    variants = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]
    fillers = [
        "browse", "search", "report", "inbox", "profile",
        "archive", "metrics", "upload", "status",
    ]
    pages: dict[str, list[str]] = {
        f"fill_{name}": [f"GET /{name}/page 0"] for name in fillers
    }
    rules = []
    for name in variants[:branching]:
        trigger = f"POST /task/{name} 1"
        dependent = f"GET /result/{name} 2"
        pages[f"trig_{name}"] = [trigger]
        rules.append(LongRangeRule(trigger, "GET /task/notify 0", distance - 1))
        rules.append(LongRangeRule(trigger, dependent, distance))
    filler_names = [f"fill_{name}" for name in fillers]
    trigger_names = [f"trig_{name}" for name in variants[:branching]]
    edges = [(name, (1.0 - trigger_rate) / len(filler_names)) for name in filler_names]
    edges += [(name, trigger_rate / len(trigger_names)) for name in trigger_names]
    transitions = {name: list(edges) for name in pages}
    return SessionGrammar(
        pages=pages,
        transitions=transitions,
        long_range=rules,
        start_page=filler_names[0],
    )
