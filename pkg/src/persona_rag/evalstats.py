"""Paired evaluation harness: contingency tables, McNemar tests, survey stats.

Binary persona judgments pair up per (evaluator, story) across the two
prompting strategies and land in a 2x2 contingency table. The McNemar tests
read only the discordant cells b and c:

* exact variant: statistic min(b, c), two-sided binomial tail under p=0.5
  computed with exact integer binomials, doubled and clamped to 1;
* chi-square variant: statistic (b - c)^2 / (b + c) against the
  chi-square distribution with one degree of freedom, whose survival
  function at x is erfc(sqrt(x / 2)).

The auto policy prefers the exact variant below 25 discordant pairs.

Survey responses and generation records get plain descriptive statistics:
means, histograms, threshold proportions, per-strategy efficiency means.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateId,
    MalformedRow,
    NoDiscordantPairs,
    NoRecords,
    NoResponses,
    SubsetTooLarge,
    UnpairedJudgment,
)
from .personagen import GenerationRecord, PromptStrategy

DEFAULT_ALPHA = 0.05
EXACT_TEST_MAX_DISCORDANT = 25      # below this, auto policy uses the exact test


class Metric(str, Enum):
    COMPLETENESS = "completeness"
    RELEVANCE = "relevance"
    CONSISTENCY = "consistency"


class SurveyRound(str, Enum):
    INITIAL = "initial"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class BinaryJudgment:
    evaluator_id: str
    story_id: str
    metric: Metric
    method: PromptStrategy
    response: bool


@dataclass(frozen=True)
class ContingencyTable:
    """Paired counts: a both-Yes, b FS-Yes/CoT-No, c FS-No/CoT-Yes, d both-No."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency counts cannot be negative")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def n_d(self) -> int:
        return self.b + self.c


@dataclass(frozen=True)
class McNemarResult:
    variant: str                    # "exact" | "chi_square"
    statistic: float
    p_value: float
    significant: bool
    alpha: float = DEFAULT_ALPHA


@dataclass(frozen=True)
class SurveyResponse:
    evaluator_id: str
    question_id: str
    answer: str                     # rating digits, likert label, or choice label
    survey_round: SurveyRound


# -- contingency ------------------------------------------------------------


def build_contingency(
    judgments: Iterable[BinaryJudgment], metric: Metric
) -> ContingencyTable:
    """Pair each (evaluator, story) across the two methods for one metric."""
    pairs: dict[tuple[str, str], dict[PromptStrategy, bool]] = {}
    for judgment in judgments:
        if judgment.metric is not metric:
            continue
        key = (judgment.evaluator_id, judgment.story_id)
        per_method = pairs.setdefault(key, {})
        if judgment.method in per_method:
            raise DuplicateId(
                f"duplicate judgment for evaluator {key[0]!r}, story {key[1]!r}, "
                f"method {judgment.method.value}"
            )
        per_method[judgment.method] = judgment.response
    unpaired = sorted(key for key, per in pairs.items() if len(per) != 2)
    if unpaired:
        raise UnpairedJudgment(unpaired)
    a = b = c = d = 0
    for per in pairs.values():
        few_shot = per[PromptStrategy.FEW_SHOT]
        cot = per[PromptStrategy.COT]
        if few_shot and cot:
            a += 1
        elif few_shot and not cot:
            b += 1
        elif not few_shot and cot:
            c += 1
        else:
            d += 1
    return ContingencyTable(a=a, b=b, c=c, d=d)


# -- McNemar variants -------------------------------------------------------


def mcnemar_exact(table: ContingencyTable, alpha: float = DEFAULT_ALPHA) -> McNemarResult:
    """Two-sided exact binomial McNemar test over the discordant pairs."""
    if table.n_d == 0:
        raise NoDiscordantPairs("exact test undefined with no discordant pairs")
    statistic = min(table.b, table.c)
    tail = sum(math.comb(table.n_d, k) for k in range(statistic + 1))
    p_value = min(1.0, 2.0 * tail / (1 << table.n_d))
    return McNemarResult(
        variant="exact",
        statistic=float(statistic),
        p_value=p_value,
        significant=p_value < alpha,
        alpha=alpha,
    )


def mcnemar_chi_square(table: ContingencyTable, alpha: float = DEFAULT_ALPHA) -> McNemarResult:
    """Asymptotic McNemar test: (b - c)^2 / (b + c) against chi-square(1)."""
    if table.n_d == 0:
        raise NoDiscordantPairs("chi-square test undefined with no discordant pairs")
    statistic = (table.b - table.c) ** 2 / table.n_d
    p_value = math.erfc(math.sqrt(statistic / 2.0))
    return McNemarResult(
        variant="chi_square",
        statistic=statistic,
        p_value=p_value,
        significant=p_value < alpha,
        alpha=alpha,
    )


def mcnemar(
    table: ContingencyTable, policy: str = "auto", alpha: float = DEFAULT_ALPHA
) -> McNemarResult:
    """Variant selection: auto runs exact below 25 discordant pairs."""
    if policy == "exact":
        return mcnemar_exact(table, alpha)
    if policy == "chi_square":
        return mcnemar_chi_square(table, alpha)
    if policy != "auto":
        raise ValueError(f"unknown McNemar policy {policy!r}")
    if table.n_d == 0:
        raise NoDiscordantPairs("McNemar tests undefined with no discordant pairs")
    if table.n_d < EXACT_TEST_MAX_DISCORDANT:
        return mcnemar_exact(table, alpha)
    return mcnemar_chi_square(table, alpha)


# -- evaluation design ------------------------------------------------------


@dataclass(frozen=True)
class EvaluationPlan:
    story_ids: tuple[str, ...]
    # evaluator -> story -> the order the two strategies are shown
    presentation_orders: Mapping[str, Mapping[str, tuple[PromptStrategy, PromptStrategy]]]


def select_evaluation_subset(
    story_ids: Sequence[str],
    n: int,
    seed: int,
    evaluator_ids: Sequence[str] = (),
) -> EvaluationPlan:
    """Seeded story sample plus per-evaluator randomized presentation order."""
    if n > len(story_ids):
        raise SubsetTooLarge(f"cannot sample {n} of {len(story_ids)} stories")
    subset = tuple(random.Random(seed).sample(list(story_ids), n))
    orders: dict[str, dict[str, tuple[PromptStrategy, PromptStrategy]]] = {}
    for evaluator_id in evaluator_ids:
        per_story: dict[str, tuple[PromptStrategy, PromptStrategy]] = {}
        for story_id in subset:
            digest = hashlib.sha256(f"{seed}:{evaluator_id}:{story_id}".encode()).digest()
            flipped = digest[0] & 1
            order = (PromptStrategy.COT, PromptStrategy.FEW_SHOT) if flipped else (
                PromptStrategy.FEW_SHOT, PromptStrategy.COT
            )
            per_story[story_id] = order
        orders[evaluator_id] = per_story
    return EvaluationPlan(story_ids=subset, presentation_orders=orders)


# -- survey statistics ------------------------------------------------------


def _question_answers(
    responses: Iterable[SurveyResponse],
    question_id: str,
    survey_round: SurveyRound | None,
) -> list[str]:
    return [
        r.answer
        for r in responses
        if r.question_id == question_id
        and (survey_round is None or r.survey_round is survey_round)
    ]


def _as_rating(answer: str) -> float | None:
    try:
        return float(answer)
    except ValueError:
        return None


def mean_rating(
    responses: Iterable[SurveyResponse],
    question_id: str,
    survey_round: SurveyRound | None = None,
) -> float:
    """Arithmetic mean over the numeric, non-missing answers to one question."""
    answers = _question_answers(responses, question_id, survey_round)
    ratings = [r for a in answers if (r := _as_rating(a)) is not None]
    if not ratings:
        raise NoResponses(f"no numeric answers for question {question_id!r}")
    return sum(ratings) / len(ratings)


def rating_distribution(
    responses: Iterable[SurveyResponse],
    question_id: str,
    survey_round: SurveyRound | None = None,
) -> dict[str, int]:
    """Histogram over the non-missing answer values, numerically sorted when possible."""
    answers = [a for a in _question_answers(responses, question_id, survey_round) if a.strip()]
    if not answers:
        raise NoResponses(f"no answers for question {question_id!r}")
    counts = Counter(answers)
    if all(_as_rating(a) is not None for a in counts):
        ordered = sorted(counts, key=lambda a: float(a))
    else:
        ordered = sorted(counts)
    return {answer: counts[answer] for answer in ordered}


def proportion_at_least(
    responses: Iterable[SurveyResponse],
    question_id: str,
    threshold_labels: Sequence[str],
    survey_round: SurveyRound | None = None,
) -> float:
    """Share of non-missing answers that fall in the threshold label set."""
    answers = [a for a in _question_answers(responses, question_id, survey_round) if a.strip()]
    if not answers:
        raise NoResponses(f"no answers for question {question_id!r}")
    threshold = set(threshold_labels)
    return sum(1 for a in answers if a in threshold) / len(answers)


# -- efficiency -------------------------------------------------------------


@dataclass(frozen=True)
class EfficiencySummary:
    strategy: PromptStrategy
    mean_elapsed_seconds: float
    mean_total_tokens: float
    count: int


def efficiency_summary(records: Sequence[GenerationRecord]) -> dict[PromptStrategy, EfficiencySummary]:
    """Per-strategy means of elapsed seconds and total tokens."""
    if not records:
        raise NoRecords("efficiency summary needs at least one record")
    grouped: dict[PromptStrategy, list[GenerationRecord]] = {}
    for record in records:
        grouped.setdefault(record.strategy, []).append(record)
    out = {}
    for strategy in sorted(grouped, key=lambda s: s.value):
        members = grouped[strategy]
        out[strategy] = EfficiencySummary(
            strategy=strategy,
            mean_elapsed_seconds=sum(r.elapsed_seconds for r in members) / len(members),
            mean_total_tokens=sum(r.total_tokens for r in members) / len(members),
            count=len(members),
        )
    return out


# -- file interfaces --------------------------------------------------------

JUDGMENTS_CSV_HEADER = ["evaluator_id", "story_id", "metric", "method", "response"]
SURVEY_CSV_HEADER = ["evaluator_id", "question_id", "answer", "round"]


def load_judgments(path: str | Path) -> list[BinaryJudgment]:
    """Read the judgments CSV; response values are yes/no, case-insensitive."""
    judgments = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != JUDGMENTS_CSV_HEADER:
            raise MalformedRow(f"expected header {JUDGMENTS_CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedRow(f"line {lineno}: expected 5 columns, got {len(row)}")
            evaluator_id, story_id, metric_raw, method_raw, response_raw = (
                cell.strip() for cell in row
            )
            try:
                metric = Metric(metric_raw)
                method = PromptStrategy(method_raw)
            except ValueError as exc:
                raise MalformedRow(f"line {lineno}: {exc}") from None
            response_norm = response_raw.lower()
            if response_norm not in ("yes", "no"):
                raise MalformedRow(f"line {lineno}: response must be yes or no, got {response_raw!r}")
            judgments.append(
                BinaryJudgment(
                    evaluator_id=evaluator_id,
                    story_id=story_id,
                    metric=metric,
                    method=method,
                    response=response_norm == "yes",
                )
            )
    return judgments


def load_survey(path: str | Path) -> list[SurveyResponse]:
    """Read the survey CSV; empty answers are legal and count as missing."""
    responses = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SURVEY_CSV_HEADER:
            raise MalformedRow(f"expected header {SURVEY_CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(f"line {lineno}: expected 4 columns, got {len(row)}")
            evaluator_id, question_id, answer, round_raw = (cell.strip() for cell in row)
            try:
                survey_round = SurveyRound(round_raw)
            except ValueError as exc:
                raise MalformedRow(f"line {lineno}: {exc}") from None
            responses.append(
                SurveyResponse(
                    evaluator_id=evaluator_id,
                    question_id=question_id,
                    answer=answer,
                    survey_round=survey_round,
                )
            )
    return responses


def analyze_judgments(
    judgments: Sequence[BinaryJudgment],
    policy: str = "auto",
    alpha: float = DEFAULT_ALPHA,
) -> dict[Metric, tuple[ContingencyTable, McNemarResult]]:
    """One contingency table and test result per metric present."""
    metrics = sorted({j.metric for j in judgments}, key=lambda m: m.value)
    out = {}
    for metric in metrics:
        table = build_contingency(judgments, metric)
        out[metric] = (table, mcnemar(table, policy=policy, alpha=alpha))
    return out


def write_mcnemar_csv(
    analysis: Mapping[Metric, tuple[ContingencyTable, McNemarResult]],
    path: str | Path,
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["metric", "a", "b", "c", "d", "n_d", "variant", "statistic", "p_value", "significant"]
        )
        for metric in sorted(analysis, key=lambda m: m.value):
            table, result = analysis[metric]
            writer.writerow([
                metric.value, table.a, table.b, table.c, table.d, table.n_d,
                result.variant, f"{result.statistic:.4f}", f"{result.p_value:.4f}",
                str(result.significant).lower(),
            ])


def write_efficiency_csv(
    summary: Mapping[PromptStrategy, EfficiencySummary], path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "mean_elapsed_seconds", "mean_total_tokens", "count"])
        for strategy in sorted(summary, key=lambda s: s.value):
            row = summary[strategy]
            writer.writerow([
                strategy.value,
                f"{row.mean_elapsed_seconds:.4f}",
                f"{row.mean_total_tokens:.2f}",
                row.count,
            ])


def analysis_to_jsonable(
    analysis: Mapping[Metric, tuple[ContingencyTable, McNemarResult]]
) -> dict:
    out = {}
    for metric in sorted(analysis, key=lambda m: m.value):
        table, result = analysis[metric]
        out[metric.value] = {
            "a": table.a, "b": table.b, "c": table.c, "d": table.d,
            "n": table.n, "n_d": table.n_d,
            "variant": result.variant,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "significant": result.significant,
            "alpha": result.alpha,
        }
    return out


def write_summary_json(payload: Mapping[str, object], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
