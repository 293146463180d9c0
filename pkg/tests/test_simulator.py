import pytest

from fpaudit.simulator import (
    CACHE_MISS,
    PARSE_ERROR,
    CacherResponder,
    HonestResponder,
    LatencyModel,
    RecordingResponder,
    SimConfigError,
    SimProviderConfig,
    produce,
    sim_family_to_doc,
    load_sim_config,
)
from fpaudit.challenge import render_test
from fpaudit.versions import parse_version as pv

import json


def test_honest_old_version_answers_with_legacy_float(sim_family):
    responder = HonestResponder(sim_family, pv("7.1.1"))
    body = responder.evaluate(b"<?php var_dump(@unserialize('d:314159e++2;'));")
    assert body == b"float(314159)\n"


def test_honest_new_version_answers_bool_false(sim_family):
    responder = HonestResponder(sim_family, pv("7.2.14"))
    body = responder.evaluate(b"<?php var_dump(@unserialize('d:42e++2;'));")
    assert body == b"bool(false)\n"


def test_honest_deterministic(sim_family):
    responder = HonestResponder(sim_family, pv("7.2.14"))
    payload = b"<?php var_dump(api_7_0_0(123));"
    assert responder.evaluate(payload) == responder.evaluate(payload)


def test_unknown_payload_is_modeled_error_not_crash(sim_family):
    responder = HonestResponder(sim_family, pv("7.2.14"))
    assert responder.evaluate(b"<?php while(true){};") == PARSE_ERROR
    assert responder.evaluate(b"<?php nosuchfn(1);") == b"warn:unknown-function\n"


def test_syntax_floor_yields_parse_error_below_dependency(sim_family):
    old = HonestResponder(sim_family, pv("5.6.31"))
    assert old.evaluate(b"<?php var_dump(api_7_1_20(5));") == PARSE_ERROR
    mid = HonestResponder(sim_family, pv("7.0.15"))
    assert mid.evaluate(b"<?php var_dump(api_7_1_20(5));") == b"warn:undefined:api_7_1_20\n"


def test_hard_function_fidelity_over_whole_family(db, sim_family, rng):
    # For every version and every database entry, the honest answer matches
    # the expected payload exactly when the probed function is available.
    for src in sim_family.family.versions:
        responder = HonestResponder(sim_family, src)
        for tested, entry in db.entries.items():
            if not entry.has_payload:
                continue
            rt = render_test(db, tested, rng)
            matches = responder.evaluate(rt.challenge_payload) == rt.expected_payload
            assert matches == (src in db.availability[tested]), (str(src), str(tested))


def test_claim_faker_only_alters_claim(sim_family, db, rng):
    cfg = SimProviderConfig(src_version=pv("7.1.1"), behavior="claim-faker",
                            claim_label="20.9.85-car", seed=1)
    faker = produce(sim_family, cfg)
    honest = HonestResponder(sim_family, pv("7.1.1"))
    assert faker.evaluate(b"<?php phpversion();") == b"20.9.85-car"
    assert honest.evaluate(b"<?php phpversion();") == b"7.1.1"
    for tested, entry in db.entries.items():
        if not entry.has_payload:
            continue
        rt = render_test(db, tested, rng)
        assert faker.evaluate(rt.challenge_payload) == honest.evaluate(rt.challenge_payload)


def test_produce_rejects_faking_hard_function(sim_family):
    cfg = SimProviderConfig(src_version=pv("7.1.1"), behavior="function-faker",
                            fake_functions=("unserialize",))
    with pytest.raises(SimConfigError, match="unserialize"):
        produce(sim_family, cfg)


def test_function_faker_overrides_non_hard_only(sim_family):
    cfg = SimProviderConfig(src_version=pv("7.1.1"), behavior="function-faker",
                            fake_functions=("strtoupper",), seed=1)
    faker = produce(sim_family, cfg)
    assert faker.evaluate(b"<?php strtoupper('abc');") == b"faked:strtoupper\n"
    honest = HonestResponder(sim_family, pv("7.1.1"))
    payload = b"<?php var_dump(api_7_1_1(7));"
    assert faker.evaluate(payload) == honest.evaluate(payload)


def test_proxy_adds_delay_floor(sim_family):
    cfg = SimProviderConfig(src_version=pv("7.2.14"), behavior="proxy",
                            latency=LatencyModel(0.005, 0.0), proxy_floor=0.5, seed=1)
    proxy = produce(sim_family, cfg)
    body, latency = proxy.respond(b"<?php var_dump(api_7_0_0(3));")
    assert body == b"api_7_0_0:ok:3\n"
    assert latency >= 0.5


def test_cacher_replays_and_fails_closed(sim_family):
    recorder = RecordingResponder(HonestResponder(sim_family, pv("7.2.14"), seed=1))
    payload = b"<?php var_dump(api_7_0_0(3));"
    recorded, _ = recorder.respond(payload)
    cacher = CacherResponder(recorder.store, seed=2)
    assert cacher.respond(payload)[0] == recorded
    assert cacher.respond(b"<?php var_dump(api_7_0_0(4));")[0] == CACHE_MISS


def test_latency_model_sampling(sim_family):
    cfg = SimProviderConfig(src_version=pv("7.2.14"),
                            latency=LatencyModel(0.005, 0.003), seed=9)
    responder = produce(sim_family, cfg)
    for _ in range(50):
        _, latency = responder.respond(b"<?php phpversion();")
        assert 0.005 <= latency <= 0.008 + 1e-9


def test_config_round_trip(sim_family):
    doc = sim_family_to_doc(sim_family, provider={"source": "7.1.1", "behavior": "honest"})
    again, cfg = load_sim_config(json.dumps(doc).encode())
    assert set(again.functions) == set(sim_family.functions)
    assert cfg.src_version == pv("7.1.1")
    for name, fn in sim_family.functions.items():
        assert again.functions[name].windows == fn.windows
        assert again.functions[name].hard == fn.hard


def test_source_must_belong_to_family(sim_family):
    with pytest.raises(SimConfigError):
        HonestResponder(sim_family, pv("9.9.9"))
