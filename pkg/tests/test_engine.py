import json

import pytest

from cogmem.clock import StepClock
from cogmem.config import Config
from cogmem.engine import Engine, EngineMode, MemoryDump
from cogmem.errors import ConfigError, NoAnswer, StoreUnavailable
from cogmem.knowledge import KnowledgeSource

from conftest import make_config, talk


def durable_files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


def test_mode_parsing():
    assert EngineMode.parse("traditional") is EngineMode.TRADITIONAL
    assert EngineMode.parse(EngineMode.COGNITIVE) is EngineMode.COGNITIVE
    with pytest.raises(ValueError):
        EngineMode.parse("hybrid")


def test_promoted_memory_is_queryable_across_sessions(engine):
    tok = engine.issue_token("alice")
    s1 = engine.open_session(tok).session
    talk(engine, s1, "I like green tea.", "yes")
    report = engine.close_session(s1)
    assert report.promoted == ["r00000001"]
    (rec,) = engine.query_memory(tok, "green tea")
    assert rec.content == "i like green tea"
    assert engine.resolve_knowledge(tok, "what tea do I like").source is KnowledgeSource.DYNAMIC
    # other users see nothing
    assert engine.query_memory(engine.issue_token("bob"), "green tea") == []


def test_unconfirmed_single_mention_is_not_promoted(engine):
    tok = engine.issue_token("alice")
    s = engine.open_session(tok).session
    talk(engine, s, "I like green tea.", "suggest a drink")
    (trace,) = engine.close_session(s).traces
    assert trace.outcome.value == "DiscardedBelowThreshold"


def test_inspect_dump(engine):
    tok = engine.issue_token("alice")
    s = engine.open_session(tok).session
    talk(engine, s, "I like green tea.", "yes")
    engine.close_session(s)
    dump = engine.inspect("alice")
    assert [r.record_id for r in dump.records] == ["r00000001"]
    assert len(dump.traces) == 1 and dump.journal_refs["r00000001"] > 0
    assert MemoryDump.from_dict(json.loads(json.dumps(dump.to_dict()))) == dump
    text = dump.render()
    assert "r00000001 [Preference] 'i like green tea'" in text and dump.owner not in text


def test_traditional_mode_keeps_nothing(tmp_path):
    cfg = make_config(tmp_path / "d")
    with Engine(cfg, clock=StepClock()) as cog:
        s = cog.open_session(cog.issue_token("alice")).session
        talk(cog, s, "I like green tea.", "yes")
        cog.close_session(s)
    before = durable_files(tmp_path / "d")
    with Engine(cfg, EngineMode.TRADITIONAL, clock=StepClock()) as trad:
        tok = trad.issue_token("alice")
        s = trad.open_session(tok).session
        assert s.startswith("t")
        ex = trad.converse(s, "I like jasmine tea.")
        assert not ex.system_turn.text.startswith("Noted")
        assert trad.converse(s, "suggest a drink").response.used_turns == ()
        assert trad.close_session(s).traces == []
        assert trad.query_memory(tok, "tea") == []
        with pytest.raises(NoAnswer):
            trad.resolve_knowledge(tok, "what tea do I like")
        with pytest.raises(StoreUnavailable):
            trad.store.put("x", 1)
        # the read path still works for inspection
        assert len(trad.inspect("alice").records) == 1
    assert durable_files(tmp_path / "d") == before


def test_traditional_mode_on_a_fresh_directory_writes_nothing(tmp_path):
    with Engine(make_config(tmp_path / "d"), "Traditional", clock=StepClock()) as trad:
        s = trad.open_session(trad.issue_token("alice")).session
        trad.converse(s, "what is the capital of France")
        trad.close_session(s)
    assert not (tmp_path / "d").exists() or durable_files(tmp_path / "d") == {}


def test_static_knowledge_fingerprint_is_constant_over_a_run(engine):
    start = engine.static.fingerprint()
    tok = engine.issue_token("alice")
    for _ in range(2):
        s = engine.open_session(tok).session
        talk(engine, s, "I like green tea.", "yes", "what is the capital of France")
        engine.close_session(s)
    assert engine.static.fingerprint() == start


# -------------------------------------------------------------------- config


def test_config_load_nested_and_dotted(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({
        "stm": {"window_capacity": 5},
        "relevance.threshold": 0.4,
        "relevance": {"weights": {"recency": 3}},
        "store": {"data_dir": "data"},
    }))
    cfg = Config.load(path)
    assert cfg.stm.window_capacity == 5 and cfg.relevance.threshold == 0.4
    assert cfg.relevance.weights["recency"] == 3.0 and cfg.relevance.weights["specificity"] == 1.0
    assert cfg.store.data_dir == str((tmp_path / "data").resolve())


@pytest.mark.parametrize(
    "raw",
    [{"nope": {"x": 1}}, {"stm": {"nope": 1}}, {"stm": {"window_capacity": 0}}, {"relevance": {"weights": {"mood": 1}}}],
)
def test_config_rejects_bad_keys_and_values(tmp_path, raw):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ConfigError):
        Config.load(path)


def test_config_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        Config.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        Config.load(tmp_path / "bad.json")


def test_replace_does_not_mutate_the_original():
    base = Config()
    copy = base.replace(relevance__weights__recency=5, stm__window_capacity=3)
    assert base.relevance.weights["recency"] == 1.0 and base.stm.window_capacity == 7
    assert copy.relevance.weights["recency"] == 5.0 and copy.stm.window_capacity == 3
