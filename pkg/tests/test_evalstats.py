"""Tests for paired evaluation statistics: McNemar tests, surveys, efficiency.

The exact McNemar p-value is checked against a brute-force enumeration of
all 2^n_d equally likely discordant outcomes, and the chi-square variant
against scipy's chi-square survival function, so each implementation is
validated by an independent computation route.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import scipy.stats

from persona_rag.errors import (
    DuplicateId,
    MalformedRow,
    NoDiscordantPairs,
    NoRecords,
    NoResponses,
    SubsetTooLarge,
    UnpairedJudgment,
)
from persona_rag.evalstats import (
    DEFAULT_ALPHA,
    EXACT_TEST_MAX_DISCORDANT,
    JUDGMENTS_CSV_HEADER,
    SURVEY_CSV_HEADER,
    BinaryJudgment,
    ContingencyTable,
    EfficiencySummary,
    Metric,
    SurveyResponse,
    SurveyRound,
    analysis_to_jsonable,
    analyze_judgments,
    build_contingency,
    efficiency_summary,
    load_judgments,
    load_survey,
    mcnemar,
    mcnemar_chi_square,
    mcnemar_exact,
    mean_rating,
    proportion_at_least,
    rating_distribution,
    select_evaluation_subset,
    write_efficiency_csv,
    write_mcnemar_csv,
    write_summary_json,
)
from persona_rag.personagen import GenerationRecord, PromptStrategy, parse_persona_output

from conftest import FIXTURES_DIR


def brute_force_exact_p(b: int, c: int) -> float:
    """Enumerate every equally likely split of the discordant pairs.

    Each of the 2^n_d outcomes assigns every discordant pair to the b side
    or the c side; the two-sided p-value doubles the share of outcomes at
    least as extreme as min(b, c), clamped to 1.
    """
    n_d = b + c
    statistic = min(b, c)
    hits = sum(1 for mask in range(1 << n_d) if mask.bit_count() <= statistic)
    return min(1.0, 2.0 * hits / (1 << n_d))


def judgment(
    evaluator: str, story: str, metric: Metric, method: PromptStrategy, response: bool
) -> BinaryJudgment:
    return BinaryJudgment(
        evaluator_id=evaluator, story_id=story, metric=metric,
        method=method, response=response,
    )


def paired_judgments(
    metric: Metric, outcomes: list[tuple[bool, bool]]
) -> list[BinaryJudgment]:
    """One (few_shot, cot) response pair per synthetic (evaluator, story)."""
    out = []
    for i, (few_shot, cot) in enumerate(outcomes):
        key = f"story-{i}"
        out.append(judgment("e1", key, metric, PromptStrategy.FEW_SHOT, few_shot))
        out.append(judgment("e1", key, metric, PromptStrategy.COT, cot))
    return out


def make_record(strategy: PromptStrategy, elapsed: float, tokens: int) -> GenerationRecord:
    persona = parse_persona_output(json.dumps({
        "name": "N", "role": "R", "number_of_employees": "1", "fleet_size": "1",
        "short_story": "S", "what_is_important": ["w"], "challenges": ["c"],
        "expectations": ["e"], "buying_considerations": ["b"],
    }))
    return GenerationRecord(
        record_id=f"x:{strategy.value}:{elapsed}:{tokens}", story_id="x",
        strategy=strategy, prompt_text="p", raw_response="r", persona=persona,
        elapsed_seconds=elapsed, prompt_tokens=tokens - 1, completion_tokens=1,
        total_tokens=tokens, model_id="m", created_at="t",
    )


class TestContingencyTable:
    def test_totals(self) -> None:
        table = ContingencyTable(a=3, b=11, c=1, d=0)
        assert table.n == 15
        assert table.n_d == 12

    def test_negative_counts_rejected(self) -> None:
        with pytest.raises(ValueError, match="negative"):
            ContingencyTable(a=1, b=-1, c=0, d=0)


class TestBuildContingency:
    def test_orientation(self) -> None:
        """b counts few-shot Yes with chain-of-thought No; c the reverse."""
        outcomes = [(True, True)] * 2 + [(True, False)] * 5 + [(False, True)] * 1 + [
            (False, False)
        ] * 3
        table = build_contingency(paired_judgments(Metric.RELEVANCE, outcomes),
                                  Metric.RELEVANCE)
        assert (table.a, table.b, table.c, table.d) == (2, 5, 1, 3)

    def test_other_metrics_ignored(self) -> None:
        judgments = paired_judgments(Metric.RELEVANCE, [(True, True)])
        judgments += paired_judgments(Metric.CONSISTENCY, [(False, False)] * 4)
        table = build_contingency(judgments, Metric.RELEVANCE)
        assert (table.a, table.n) == (1, 1)

    def test_duplicate_method_rejected(self) -> None:
        judgments = paired_judgments(Metric.RELEVANCE, [(True, True)])
        judgments.append(judgment("e1", "story-0", Metric.RELEVANCE,
                                  PromptStrategy.FEW_SHOT, False))
        with pytest.raises(DuplicateId, match="story-0"):
            build_contingency(judgments, Metric.RELEVANCE)

    def test_unpaired_keys_reported_sorted(self) -> None:
        judgments = [
            judgment("e2", "s2", Metric.RELEVANCE, PromptStrategy.FEW_SHOT, True),
            judgment("e1", "s9", Metric.RELEVANCE, PromptStrategy.COT, True),
            judgment("e1", "s1", Metric.RELEVANCE, PromptStrategy.FEW_SHOT, True),
            judgment("e1", "s1", Metric.RELEVANCE, PromptStrategy.COT, False),
        ]
        with pytest.raises(UnpairedJudgment) as excinfo:
            build_contingency(judgments, Metric.RELEVANCE)
        assert excinfo.value.keys == [("e1", "s9"), ("e2", "s2")]


class TestMcNemarExact:
    def test_strongly_one_sided_table(self) -> None:
        result = mcnemar_exact(ContingencyTable(a=3, b=11, c=1, d=0))
        assert result.variant == "exact"
        assert result.statistic == 1.0
        assert result.p_value == 26 / 4096
        assert result.p_value == pytest.approx(0.0063, abs=5e-5)
        assert result.significant

    def test_weakly_discordant_table(self) -> None:
        result = mcnemar_exact(ContingencyTable(a=11, b=3, c=1, d=0))
        assert result.p_value == 0.625
        assert not result.significant

    def test_zero_minority_table(self) -> None:
        result = mcnemar_exact(ContingencyTable(a=1, b=3, c=0, d=11))
        assert result.statistic == 0.0
        assert result.p_value == 0.25
        assert not result.significant

    def test_balanced_table_clamps_to_one(self) -> None:
        assert mcnemar_exact(ContingencyTable(a=0, b=2, c=2, d=0)).p_value == 1.0

    def test_agrees_with_brute_force_enumeration(self) -> None:
        for b in range(0, 9):
            for c in range(0, 9):
                if b + c == 0 or b + c > 12:
                    continue
                got = mcnemar_exact(ContingencyTable(a=0, b=b, c=c, d=0)).p_value
                assert got == pytest.approx(brute_force_exact_p(b, c), abs=1e-15), (b, c)

    def test_no_discordant_pairs(self) -> None:
        with pytest.raises(NoDiscordantPairs):
            mcnemar_exact(ContingencyTable(a=5, b=0, c=0, d=5))

    def test_alpha_threshold(self) -> None:
        table = ContingencyTable(a=11, b=3, c=1, d=0)
        assert not mcnemar_exact(table, alpha=0.05).significant
        assert mcnemar_exact(table, alpha=0.7).significant


class TestMcNemarChiSquare:
    def test_statistic_and_p(self) -> None:
        result = mcnemar_chi_square(ContingencyTable(a=0, b=11, c=1, d=0))
        assert result.variant == "chi_square"
        assert result.statistic == pytest.approx(100 / 12, abs=1e-12)
        assert result.p_value == pytest.approx(0.0039, abs=5e-5)
        assert result.significant

    def test_balanced_table(self) -> None:
        result = mcnemar_chi_square(ContingencyTable(a=0, b=4, c=4, d=0))
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_agrees_with_scipy_survival_function(self) -> None:
        for b in range(0, 30, 3):
            for c in range(0, 30, 4):
                if b + c == 0:
                    continue
                result = mcnemar_chi_square(ContingencyTable(a=1, b=b, c=c, d=2))
                expected = float(scipy.stats.chi2.sf(result.statistic, df=1))
                assert result.p_value == pytest.approx(expected, abs=1e-12), (b, c)

    def test_no_discordant_pairs(self) -> None:
        with pytest.raises(NoDiscordantPairs):
            mcnemar_chi_square(ContingencyTable(a=5, b=0, c=0, d=5))


class TestMcNemarPolicy:
    def test_auto_prefers_exact_below_threshold(self) -> None:
        table = ContingencyTable(a=0, b=13, c=11, d=0)
        assert table.n_d == EXACT_TEST_MAX_DISCORDANT - 1
        assert mcnemar(table).variant == "exact"

    def test_auto_switches_at_threshold(self) -> None:
        table = ContingencyTable(a=0, b=13, c=12, d=0)
        assert table.n_d == EXACT_TEST_MAX_DISCORDANT
        assert mcnemar(table).variant == "chi_square"

    def test_forced_variants(self) -> None:
        table = ContingencyTable(a=0, b=30, c=10, d=0)
        assert mcnemar(table, policy="exact").variant == "exact"
        small = ContingencyTable(a=0, b=3, c=1, d=0)
        assert mcnemar(small, policy="chi_square").variant == "chi_square"

    def test_auto_with_no_discordant_pairs(self) -> None:
        with pytest.raises(NoDiscordantPairs):
            mcnemar(ContingencyTable(a=9, b=0, c=0, d=1))

    def test_unknown_policy(self) -> None:
        with pytest.raises(ValueError, match="unknown McNemar policy"):
            mcnemar(ContingencyTable(a=0, b=1, c=1, d=0), policy="bayes")


class TestSelectEvaluationSubset:
    STORIES = [f"story-{i:02d}" for i in range(24)]

    def test_deterministic_for_seed(self) -> None:
        a = select_evaluation_subset(self.STORIES, 5, seed=42, evaluator_ids=("e1",))
        b = select_evaluation_subset(self.STORIES, 5, seed=42, evaluator_ids=("e1",))
        assert a == b

    def test_seed_changes_selection(self) -> None:
        a = select_evaluation_subset(self.STORIES, 5, seed=1)
        b = select_evaluation_subset(self.STORIES, 5, seed=2)
        assert a.story_ids != b.story_ids

    def test_subset_is_sample_without_replacement(self) -> None:
        plan = select_evaluation_subset(self.STORIES, 5, seed=0)
        assert len(plan.story_ids) == 5
        assert len(set(plan.story_ids)) == 5
        assert set(plan.story_ids) <= set(self.STORIES)

    def test_too_large_subset(self) -> None:
        with pytest.raises(SubsetTooLarge):
            select_evaluation_subset(self.STORIES, 25, seed=0)

    def test_orders_cover_both_strategies(self) -> None:
        plan = select_evaluation_subset(
            self.STORIES, 5, seed=0, evaluator_ids=("e1", "e2")
        )
        for per_story in plan.presentation_orders.values():
            assert set(per_story) == set(plan.story_ids)
            for order in per_story.values():
                assert sorted(s.value for s in order) == ["cot", "few_shot"]

    def test_orders_roughly_balanced(self) -> None:
        evaluators = tuple(f"e{i}" for i in range(200))
        plan = select_evaluation_subset(self.STORIES, 5, seed=3,
                                        evaluator_ids=evaluators)
        orders = [
            order
            for per_story in plan.presentation_orders.values()
            for order in per_story.values()
        ]
        few_shot_first = sum(1 for o in orders if o[0] is PromptStrategy.FEW_SHOT)
        assert 0.4 <= few_shot_first / len(orders) <= 0.6


def survey(evaluator: str, question: str, answer: str, rnd: SurveyRound) -> SurveyResponse:
    return SurveyResponse(evaluator_id=evaluator, question_id=question,
                          answer=answer, survey_round=rnd)


class TestSurveyStats:
    INITIAL = [
        survey(f"p{i:02d}", "accuracy", str(v), SurveyRound.INITIAL)
        for i, v in enumerate([4, 5, 5, 5, 5, 6, 7, 10], start=1)
    ]
    AUGMENTED = [
        survey(f"p{i:02d}", "accuracy", str(v), SurveyRound.AUGMENTED)
        for i, v in enumerate([4, 5, 5, 6, 6, 6, 7, 7, 7, 8, 8, 8], start=1)
    ]
    USEFULNESS = [
        survey(f"p{i:02d}", "useful", answer, SurveyRound.AUGMENTED)
        for i, answer in enumerate(
            ["yes"] * 5 + ["no"] + ["yes"] * 2 + [""] + ["yes"] * 2 + ["no"], start=1
        )
    ]

    def test_mean_rating_per_round(self) -> None:
        pooled = self.INITIAL + self.AUGMENTED
        assert mean_rating(pooled, "accuracy", SurveyRound.INITIAL) == 5.875
        assert mean_rating(pooled, "accuracy", SurveyRound.AUGMENTED) == pytest.approx(
            6.4167, abs=5e-5
        )

    def test_mean_rating_pools_without_round(self) -> None:
        pooled = self.INITIAL + self.AUGMENTED
        assert mean_rating(pooled, "accuracy") == pytest.approx(
            (47 + 77) / 20, abs=1e-12
        )

    def test_mean_skips_non_numeric(self) -> None:
        responses = self.INITIAL + [
            survey("p99", "accuracy", "n/a", SurveyRound.INITIAL)
        ]
        assert mean_rating(responses, "accuracy") == 5.875

    def test_mean_without_numeric_answers(self) -> None:
        responses = [survey("p1", "useful", "yes", SurveyRound.INITIAL)]
        with pytest.raises(NoResponses):
            mean_rating(responses, "useful")

    def test_distribution_sorted_numerically(self) -> None:
        dist = rating_distribution(self.INITIAL, "accuracy")
        assert dist == {"4": 1, "5": 4, "6": 1, "7": 1, "10": 1}
        assert list(dist) == ["4", "5", "6", "7", "10"]

    def test_distribution_sorts_labels_alphabetically(self) -> None:
        dist = rating_distribution(self.USEFULNESS, "useful")
        assert list(dist) == ["no", "yes"]
        assert dist == {"no": 2, "yes": 9}

    def test_distribution_ignores_blank_answers(self) -> None:
        dist = rating_distribution(self.USEFULNESS, "useful")
        assert sum(dist.values()) == 11

    def test_proportion_uses_non_missing_denominator(self) -> None:
        """One blank answer shrinks the denominator to 11, not 12."""
        share = proportion_at_least(self.USEFULNESS, "useful", ("yes",))
        assert share == pytest.approx(9 / 11, abs=1e-12)
        assert share == pytest.approx(0.8182, abs=5e-5)

    def test_proportion_with_label_set(self) -> None:
        share = proportion_at_least(
            self.INITIAL, "accuracy", ("5", "6", "7", "8", "9", "10")
        )
        assert share == pytest.approx(7 / 8, abs=1e-12)

    def test_proportion_without_answers(self) -> None:
        with pytest.raises(NoResponses):
            proportion_at_least(self.INITIAL, "missing-question", ("yes",))


class TestEfficiencySummary:
    def test_per_strategy_means(self) -> None:
        records = [
            make_record(PromptStrategy.FEW_SHOT, 1.0, 500),
            make_record(PromptStrategy.FEW_SHOT, 3.0, 700),
            make_record(PromptStrategy.COT, 2.0, 300),
        ]
        summary = efficiency_summary(records)
        assert list(summary) == [PromptStrategy.COT, PromptStrategy.FEW_SHOT]
        few_shot = summary[PromptStrategy.FEW_SHOT]
        assert few_shot == EfficiencySummary(PromptStrategy.FEW_SHOT, 2.0, 600.0, 2)
        assert summary[PromptStrategy.COT].count == 1

    def test_no_records(self) -> None:
        with pytest.raises(NoRecords):
            efficiency_summary([])


class TestLoaders:
    def test_fixture_judgments_load(self) -> None:
        judgments = load_judgments(FIXTURES_DIR / "judgments.csv")
        assert len(judgments) == 90
        assert {j.metric for j in judgments} == set(Metric)
        assert {j.method for j in judgments} == set(PromptStrategy)

    def test_response_case_insensitive(self, tmp_path: Path) -> None:
        path = tmp_path / "j.csv"
        path.write_text(
            ",".join(JUDGMENTS_CSV_HEADER)
            + "\ne1,s1,relevance,few_shot,YES\ne1,s1,relevance,cot,No\n",
            encoding="utf-8",
        )
        judgments = load_judgments(path)
        assert [j.response for j in judgments] == [True, False]

    def test_bad_header(self, tmp_path: Path) -> None:
        path = tmp_path / "j.csv"
        path.write_text("a,b,c\n", encoding="utf-8")
        with pytest.raises(MalformedRow, match="expected header"):
            load_judgments(path)

    @pytest.mark.parametrize(
        "row,detail",
        [
            ("e1,s1,relevance,few_shot", "expected 5 columns"),
            ("e1,s1,novelty,few_shot,yes", "line 2"),
            ("e1,s1,relevance,zero_shot,yes", "line 2"),
            ("e1,s1,relevance,few_shot,maybe", "must be yes or no"),
        ],
    )
    def test_malformed_rows_report_line(
        self, tmp_path: Path, row: str, detail: str
    ) -> None:
        path = tmp_path / "j.csv"
        path.write_text(",".join(JUDGMENTS_CSV_HEADER) + "\n" + row + "\n",
                        encoding="utf-8")
        with pytest.raises(MalformedRow, match=detail):
            load_judgments(path)

    def test_fixture_survey_loads(self) -> None:
        responses = load_survey(FIXTURES_DIR / "survey.csv")
        assert len(responses) == 32
        blanks = [r for r in responses if not r.answer]
        assert len(blanks) == 1

    def test_survey_bad_round(self, tmp_path: Path) -> None:
        path = tmp_path / "s.csv"
        path.write_text(
            ",".join(SURVEY_CSV_HEADER) + "\np1,accuracy,5,final\n", encoding="utf-8"
        )
        with pytest.raises(MalformedRow, match="line 2"):
            load_survey(path)

    def test_blank_lines_skipped(self, tmp_path: Path) -> None:
        path = tmp_path / "s.csv"
        path.write_text(
            ",".join(SURVEY_CSV_HEADER) + "\n\np1,accuracy,5,initial\n\n",
            encoding="utf-8",
        )
        assert len(load_survey(path)) == 1


class TestAnalyzeJudgments:
    def test_fixture_reproduces_reference_p_values(self) -> None:
        judgments = load_judgments(FIXTURES_DIR / "judgments.csv")
        analysis = analyze_judgments(judgments)
        completeness_table, completeness = analysis[Metric.COMPLETENESS]
        assert (completeness_table.b, completeness_table.c) == (11, 1)
        assert completeness.p_value == pytest.approx(0.0063, abs=5e-5)
        assert completeness.significant
        _, relevance = analysis[Metric.RELEVANCE]
        assert relevance.p_value == pytest.approx(0.6250, abs=5e-5)
        assert not relevance.significant
        _, consistency = analysis[Metric.CONSISTENCY]
        assert consistency.p_value == pytest.approx(0.2500, abs=5e-5)
        assert not consistency.significant

    def test_policy_and_alpha_forwarded(self) -> None:
        judgments = load_judgments(FIXTURES_DIR / "judgments.csv")
        analysis = analyze_judgments(judgments, policy="chi_square", alpha=0.10)
        for _, result in analysis.values():
            assert result.variant == "chi_square"
            assert result.alpha == 0.10


class TestWriters:
    def _analysis(self):
        return analyze_judgments(load_judgments(FIXTURES_DIR / "judgments.csv"))

    def test_mcnemar_csv_layout(self, tmp_path: Path) -> None:
        path = tmp_path / "mcnemar.csv"
        write_mcnemar_csv(self._analysis(), path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "metric,a,b,c,d,n_d,variant,statistic,p_value,significant"
        assert lines[1] == "completeness,3,11,1,0,12,exact,1.0000,0.0063,true"
        assert lines[2].startswith("consistency,")
        assert lines[3].startswith("relevance,")

    def test_efficiency_csv_layout(self, tmp_path: Path) -> None:
        path = tmp_path / "efficiency.csv"
        write_efficiency_csv(
            efficiency_summary([
                make_record(PromptStrategy.FEW_SHOT, 1.5, 500),
                make_record(PromptStrategy.COT, 0.5, 300),
            ]),
            path,
        )
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "strategy,mean_elapsed_seconds,mean_total_tokens,count"
        assert lines[1] == "cot,0.5000,300.00,1"
        assert lines[2] == "few_shot,1.5000,500.00,1"

    def test_summary_json_stable_bytes(self, tmp_path: Path) -> None:
        payload = {"mcnemar": analysis_to_jsonable(self._analysis()), "alpha": DEFAULT_ALPHA}
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        write_summary_json(payload, first)
        write_summary_json(payload, second)
        assert first.read_bytes() == second.read_bytes()
        text = first.read_text(encoding="utf-8")
        assert text.endswith("\n")
        parsed = json.loads(text)
        assert parsed["mcnemar"]["completeness"]["b"] == 11
        assert list(parsed) == sorted(parsed)
