from __future__ import annotations

import random

import pytest

from clarishop.agent import (
    ClarificationQuestion,
    ClarifyingSearchAgent,
    DemandRecord,
    NoAskableFacetError,
    SessionMemory,
    SessionProtocolError,
    UnknownCategoryError,
    analyze_category,
    build_structured_query,
    generate_nl_query,
    generate_questions,
    parse_user_reply,
)
from clarishop.catalog import (
    CategoryStatistics,
    LIST_FACETS,
    SyntheticSpec,
    generate_synthetic_catalog,
    summarize,
)
from clarishop.config import AgentConfig
from conftest import make_item


def memory_with(category: str = "Casual pants", demands=()) -> SessionMemory:
    memory = SessionMemory(session_id="s1", category=category)
    memory.demands.extend(demands)
    return memory


def stats_from(counts: dict[str, dict[str, int]], category="Casual pants", item_count=10):
    values = {facet: dict(counts.get(facet, {})) for facet in LIST_FACETS}
    return CategoryStatistics(category=category, item_count=item_count, values=values)


class TestBuildStructuredQuery:
    def test_chosen_option_becomes_substring_constraint(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="material", question_text="q", chosen_options=("Polyester fiber",))
            ]
        )
        query = build_structured_query(memory, max_number=100)
        assert query.category == "Casual pants"
        assert query.limit == 100
        assert len(query.constraints) == 1
        constraint = query.constraints[0]
        assert (constraint.facet, constraint.values, constraint.mode) == (
            "material",
            ("polyester fiber",),
            "substring",
        )

    def test_other_answers_leave_query_unconstrained(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="color", question_text="q", chosen_options=("Other",)),
                DemandRecord(turn=2, facet="style", question_text="q", chosen_options=("Other",)),
            ]
        )
        query = build_structured_query(memory, max_number=50)
        assert query.constraints == ()
        assert query.category == "Casual pants"

    def test_same_facet_demands_merge_into_one_or_constraint(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="color", question_text="q", chosen_options=("Red",)),
                DemandRecord(turn=3, facet="color", question_text="q", chosen_options=("Blue", "Red")),
            ]
        )
        query = build_structured_query(memory, max_number=10)
        assert len(query.constraints) == 1
        assert query.constraints[0].values == ("red", "blue")

    def test_free_text_contributes_tokens(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="color", question_text="q", free_text="I like green")
            ]
        )
        query = build_structured_query(memory, max_number=10)
        assert query.constraints[0].values == ("i", "like", "green")

    def test_unknown_facet_demand_is_skipped(self):
        memory = memory_with(
            demands=[DemandRecord(turn=1, facet="unknown", question_text="", free_text="warm start text")]
        )
        assert build_structured_query(memory, max_number=10).constraints == ()


class TestGenerateNLQuery:
    def test_category_only(self):
        assert generate_nl_query(memory_with()) == "Casual pants"

    def test_category_plus_option_keeps_original_case(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="material", question_text="q", chosen_options=("Polyester fiber",))
            ]
        )
        assert generate_nl_query(memory) == "Casual pants Polyester fiber"

    def test_duplicates_appear_once(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="color", question_text="q", chosen_options=("Red",)),
                DemandRecord(turn=3, facet="color", question_text="q", chosen_options=("red",)),
            ]
        )
        assert generate_nl_query(memory) == "Casual pants Red"

    def test_free_text_tokens_appended(self):
        memory = memory_with(
            demands=[
                DemandRecord(turn=2, facet="color", question_text="q", chosen_options=("Red",), free_text="I like green")
            ]
        )
        assert generate_nl_query(memory) == "Casual pants Red i like green"


class TestGenerateQuestions:
    def test_high_entropy_facet_wins(self):
        # color entropy ~2.19 bits; brand has a single value and is excluded
        stats = stats_from(
            {
                "color": {"red": 4, "blue": 3, "green": 2, "grey": 2, "pink": 1},
                "brand": {"acme": 10},
            }
        )
        questions = generate_questions(memory_with(), stats, 1)
        assert questions[0].facet == "color"

    def test_exactly_n_questions(self):
        stats = stats_from(
            {
                "color": {"red": 4, "blue": 3},
                "style": {"slim": 2, "loose": 2},
                "material": {"cotton": 3, "linen": 1},
                "brand": {"acme": 2, "zenith": 2},
            }
        )
        questions = generate_questions(memory_with(), stats, 3)
        assert len(questions) == 3

    def test_two_value_facet_keeps_both_candidates(self):
        stats = stats_from({"color": {"red": 4, "blue": 1}})
        (question,) = generate_questions(memory_with(), stats, 1)
        assert question.candidates == ("red", "blue", "Other")

    def test_candidates_cap_at_five_plus_other(self):
        stats = stats_from({"color": {f"c{i}": 10 - i for i in range(8)}})
        (question,) = generate_questions(memory_with(), stats, 1)
        assert len(question.candidates) == 6
        assert question.candidates[-1] == "Other"
        assert question.candidates[:5] == ("c0", "c1", "c2", "c3", "c4")

    def test_empty_stats_raise(self):
        with pytest.raises(NoAskableFacetError):
            generate_questions(memory_with(), stats_from({}), 3)

    def test_asked_facet_not_repeated_with_same_candidates(self):
        stats = stats_from({"color": {"red": 4, "blue": 1}, "style": {"slim": 1, "loose": 1}})
        memory = memory_with()
        first = generate_questions(memory, stats, 1)
        memory.asked_questions.extend(first)
        second = generate_questions(memory, stats, 1)
        assert second[0].facet != first[0].facet

    def test_asked_facet_reallowed_when_candidates_change(self):
        memory = memory_with()
        memory.asked_questions.append(
            ClarificationQuestion(facet="color", text="q", candidates=("red", "blue", "Other"))
        )
        stats = stats_from({"color": {"green": 3, "grey": 2}})
        (question,) = generate_questions(memory, stats, 1)
        assert question.facet == "color"
        assert question.candidates == ("green", "grey", "Other")

    def test_exhausted_facets_raise(self):
        memory = memory_with()
        stats = stats_from({"color": {"red": 4, "blue": 1}})
        memory.asked_questions.extend(generate_questions(memory, stats, 1))
        with pytest.raises(NoAskableFacetError):
            generate_questions(memory, stats, 1)

    def test_question_texts_mention_category(self):
        stats = stats_from({"color": {"red": 2, "blue": 1}})
        (question,) = generate_questions(memory_with(category="Sports shoes"), stats, 1)
        assert "Sports shoes" in question.text


class TestClarificationQuestionInvariants:
    def test_last_candidate_must_be_other(self):
        with pytest.raises(ValueError):
            ClarificationQuestion(facet="color", text="q", candidates=("red", "blue"))

    def test_candidate_count_bounds(self):
        with pytest.raises(ValueError):
            ClarificationQuestion(facet="color", text="q", candidates=("Other",))
        with pytest.raises(ValueError):
            ClarificationQuestion(
                facet="color", text="q", candidates=("a", "b", "c", "d", "e", "f", "Other")
            )

    def test_duplicate_candidates_rejected(self):
        with pytest.raises(ValueError):
            ClarificationQuestion(facet="color", text="q", candidates=("red", "red", "Other"))


class TestParseUserReply:
    def build_questions(self):
        return [
            ClarificationQuestion(
                facet="applicable_scenario",
                text="q1",
                candidates=("Outdoor", "Brisk walking", "Basketball", "Dance", "Travel", "Other"),
            ),
            ClarificationQuestion(facet="color", text="q2", candidates=("Light gray", "Yellow", "Other")),
        ]

    def test_multi_select(self):
        questions = self.build_questions()
        records = parse_user_reply(["Outdoor, Basketball", "Yellow"], questions, turn=2)
        assert records[0].chosen_options == ("Outdoor", "Basketball")
        assert records[0].free_text is None
        assert records[1].chosen_options == ("Yellow",)

    def test_free_text_fallback(self):
        questions = self.build_questions()
        records = parse_user_reply(["Other", "I like green"], questions, turn=2)
        assert records[0].chosen_options == ("Other",)
        assert records[1].chosen_options == ()
        assert records[1].free_text == "I like green"

    def test_case_insensitive_candidate_match(self):
        questions = self.build_questions()
        records = parse_user_reply(["outdoor", "yellow"], questions, turn=2)
        assert records[0].chosen_options == ("Outdoor",)
        assert records[1].chosen_options == ("Yellow",)

    def test_mixed_selection_and_free_text(self):
        questions = self.build_questions()
        records = parse_user_reply(["Outdoor, something custom", "Yellow"], questions, turn=2)
        assert records[0].chosen_options == ("Outdoor",)
        assert records[0].free_text == "something custom"

    def test_empty_answer_degrades_to_other(self):
        questions = self.build_questions()
        records = parse_user_reply(["", "Yellow"], questions, turn=2)
        assert records[0].chosen_options == ("Other",)

    def test_count_mismatch(self):
        with pytest.raises(SessionProtocolError):
            parse_user_reply(["Outdoor"], self.build_questions(), turn=2)


@pytest.fixture(scope="module")
def synthetic_catalog():
    return generate_synthetic_catalog(7, SyntheticSpec(categories=2, items_per_category=60, values_per_facet=8))


class TestAnalyzeCategory:
    def test_turn_one_uses_full_bucket_capped_by_id(self, synthetic_catalog):
        memory = memory_with(category="category00")
        stats = analyze_category(memory, synthetic_catalog, "structured", max_number=10, stats_top_m=10)
        expected = summarize(list(synthetic_catalog.bucket("category00"))[:10], 10)
        assert stats == expected
        assert memory.structured_attempts == 1
        assert memory.trivial_query == 0

    def test_impossible_constraint_counts_trivial_and_falls_back(self, synthetic_catalog):
        memory = memory_with(category="category00")
        memory.demands.append(
            DemandRecord(turn=2, facet="color", question_text="q", chosen_options=("nosuchvalue",))
        )
        stats = analyze_category(memory, synthetic_catalog, "structured", max_number=10, stats_top_m=10)
        assert memory.trivial_query == 1
        assert stats.item_count == 10  # whole-bucket fallback on turn 1

    def test_fallback_prefers_previous_turn_items(self, synthetic_catalog):
        memory = memory_with(category="category00")
        previous = [item.id for item in synthetic_catalog.bucket("category00")[:3]]
        memory.search_history.append(tuple(previous))
        memory.demands.append(
            DemandRecord(turn=2, facet="color", question_text="q", chosen_options=("nosuchvalue",))
        )
        stats = analyze_category(memory, synthetic_catalog, "structured", max_number=10, stats_top_m=10)
        assert stats.item_count == 3

    def test_random_is_deterministic_per_seed(self, synthetic_catalog):
        first = analyze_category(
            memory_with(category="category00"), synthetic_catalog, "random", max_number=15, seed=5
        )
        second = analyze_category(
            memory_with(category="category00"), synthetic_catalog, "random", max_number=15, seed=5
        )
        third = analyze_category(
            memory_with(category="category00"), synthetic_catalog, "random", max_number=15, seed=6
        )
        assert first == second
        assert first != third

    def test_none_gives_empty_statistics(self, synthetic_catalog):
        stats = analyze_category(memory_with(category="category00"), synthetic_catalog, "none")
        assert stats.is_empty
        assert stats.category == "category00"

    def test_unknown_category_errors(self, synthetic_catalog):
        with pytest.raises(UnknownCategoryError):
            analyze_category(memory_with(category="nope"), synthetic_catalog, "structured")

    def test_bm25_source_summarizes_search_results(self, synthetic_catalog):
        engine = ClarifyingSearchAgent(synthetic_catalog, AgentConfig(stats_source="bm25"))
        memory = memory_with(category="category00")
        stats = analyze_category(
            memory, synthetic_catalog, "bm25", max_number=20, searcher=engine.stats_searcher
        )
        assert stats.item_count > 0
        assert memory.structured_attempts == 0


class TestSession:
    def test_first_turn_structure(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t1")
        output = session.step("category00")
        assert output.turn == 1
        assert len(output.questions) == 3
        assert len(output.items) <= 10
        assert session.memory.agent_turns() == 1
        assert session.memory.dialogue_log[0] == ("user", "category00")

    def test_five_user_turns_make_ten_log_entries(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t2")
        output = session.step("category00")
        for _ in range(4):
            output = session.step(["Other"] * len(output.questions))
        assert session.memory.user_turns() == 5
        assert len(session.memory.search_history) == 5
        assert len(session.memory.dialogue_log) == 10

    def test_reply_before_start_is_protocol_error(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t3")
        with pytest.raises(SessionProtocolError):
            session.step(["Other", "Other", "Other"])

    def test_wrong_answer_count_is_protocol_error(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t4")
        session.step("category00")
        with pytest.raises(SessionProtocolError):
            session.step(["Other"])

    def test_unknown_category(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        with pytest.raises(UnknownCategoryError) as exc_info:
            agent.open_session("t5").step("Hats")
        assert "category00" in str(exc_info.value)

    def test_steps_are_deterministic(self, synthetic_catalog):
        def drive():
            agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig(seed=3))
            session = agent.open_session("fixed")
            outputs = [session.step("category00")]
            rng = random.Random(1)
            for _ in range(3):
                replies = [rng.choice(q.candidates) for q in outputs[-1].questions]
                outputs.append(session.step(replies))
            return [output.to_dict() for output in outputs]

        assert drive() == drive()

    def test_no_duplicate_question_pairs_within_session(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t6")
        output = session.step("category00")
        for _ in range(5):
            output = session.step([q.candidates[0] for q in output.questions])
        pairs = [(q.facet, q.candidates) for q in session.memory.asked_questions]
        assert len(pairs) == len(set(pairs))

    def test_candidates_come_from_statistics(self, synthetic_catalog):
        # Every non-Other candidate names an actual facet value of the category bucket.
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t7")
        output = session.step("category00")
        bucket_values = {
            value
            for item in synthetic_catalog.bucket("category00")
            for facet in LIST_FACETS
            for value in item.facet_values(facet)
        }
        for question in output.questions:
            for candidate in question.candidates[:-1]:
                assert candidate in bucket_values

    def test_demands_grow_monotonically(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t8")
        output = session.step("category00")
        counts = []
        for _ in range(3):
            output = session.step([q.candidates[0] for q in output.questions])
            counts.append(len(session.memory.demands))
        assert counts == sorted(counts)

    def test_trivial_counter_matches_empty_executions(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t9")
        output = session.step("category00")
        # Answer with free text that matches nothing, forcing empty executions.
        for _ in range(2):
            output = session.step(["zzz-does-not-exist"] * len(output.questions))
        assert session.memory.trivial_query == 2
        assert session.memory.structured_attempts == 3

    def test_warm_start_records_upfront_demand(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t10")
        output = session.start("category00", initial_query="category00 color01 brand02")
        assert session.memory.demands[0].facet == "unknown"
        assert "color01" in output.query
        assert session.memory.dialogue_log[0] == ("user", "category00 color01 brand02")

    def test_fusion_with_rerank_pipeline(self, synthetic_catalog):
        config = AgentConfig(retriever="fusion", rerank=True, seed=2)
        agent = ClarifyingSearchAgent(synthetic_catalog, config)
        session = agent.open_session("t12")
        output = session.step("category00")
        output = session.step([q.candidates[0] for q in output.questions])
        assert 0 < len(output.items) <= 10
        assert output.turn == 2

    def test_transcript_export_shape(self, synthetic_catalog):
        agent = ClarifyingSearchAgent(synthetic_catalog, AgentConfig())
        session = agent.open_session("t11")
        output = session.step("category00")
        session.step(["Other"] * len(output.questions))
        transcript = session.export_transcript()
        assert [line["turn"] for line in transcript] == [1, 2, 3, 4]
        assert [line["role"] for line in transcript] == ["user", "agent", "user", "agent"]
