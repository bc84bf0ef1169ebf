import json
import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evhub.model import REQUIRED_ARGS, Action, Command, Response
from evhub.wire import (
    MalformedJson,
    MissingField,
    NonFiniteValue,
    UnknownAction,
    decode_command,
    decode_reading,
    decode_response,
    encode_command,
    encode_reading,
    encode_response,
)

FIXTURES = Path(__file__).parent / "fixtures" / "frames"

texts = st.text(min_size=1, max_size=40).filter(lambda s: s.strip())


@st.composite
def commands(draw):
    action = draw(st.sampled_from(list(Action)))
    args = {name: draw(texts) for name in REQUIRED_ARGS[action]}
    return Command(action, **args)


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(min_value=-10**9, max_value=10**9)
    | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=10), children, max_size=4),
    max_leaves=8,
)


@st.composite
def responses(draw):
    result = draw(st.sampled_from(["ok", "error"]))
    desc = draw(texts)
    extras = draw(st.dictionaries(
        st.text(min_size=1, max_size=12).filter(lambda k: k not in ("result", "desc")),
        json_values, max_size=4))
    return Response(result, desc, extras)


class TestCommandCodec:
    @given(commands())
    def test_round_trip_identity(self, cmd):
        assert decode_command(encode_command(cmd)) == cmd

    def test_subscribe_row_decodes(self):
        frame = ('{"action":"Subscribe","phone":"+84900000001",'
                 '"fcm_id":"tokA","event":"power_outage"}')
        cmd = decode_command(frame)
        assert cmd.action is Action.SUBSCRIBE
        assert cmd.phone == "+84900000001"
        assert cmd.fcm_id == "tokA"
        assert cmd.event == "power_outage"

    def test_subscribe_without_event_is_missing_field(self):
        with pytest.raises(MissingField):
            decode_command('{"action":"Subscribe","phone":"+84900000001","fcm_id":"tokA"}')

    def test_unknown_action_rejected(self):
        with pytest.raises(UnknownAction):
            decode_command('{"action":"Reboot"}')

    def test_exactly_eight_actions_decode(self):
        for action in Action:
            args = {name: "x" if name != "phone" else "+84900000001"
                    for name in REQUIRED_ARGS[action]}
            frame = json.dumps({"action": action.value, **args})
            assert decode_command(frame).action is action
        assert len(Action) == 8

    @given(st.text(max_size=30).filter(lambda s: s not in {a.value for a in Action}))
    def test_any_other_action_string_rejected(self, tag):
        with pytest.raises(UnknownAction):
            decode_command(json.dumps({"action": tag}))

    def test_not_an_object_is_malformed(self):
        with pytest.raises(MalformedJson):
            decode_command("[1,2,3]")
        with pytest.raises(MalformedJson):
            decode_command("not json at all")

    def test_wrong_arg_type_is_malformed(self):
        with pytest.raises(MalformedJson):
            decode_command('{"action":"GetSubscriberList","event":42}')

    def test_missing_action_tag(self):
        with pytest.raises(MissingField):
            decode_command('{"event":"x"}')

    def test_extra_keys_tolerated(self):
        cmd = decode_command('{"action":"Update","stray":"ignored"}')
        assert cmd.action is Action.UPDATE


class TestResponseCodec:
    @given(responses())
    def test_round_trip_identity(self, resp):
        assert decode_response(encode_response(resp)) == resp

    def test_mandatory_tags_present(self):
        obj = json.loads(encode_response(Response.make_ok("subscribed")))
        assert obj == {"result": "ok", "desc": "subscribed"}

    def test_error_result_tag(self):
        obj = json.loads(encode_response(Response.make_error("unauthorized")))
        assert obj["result"] == "error"

    def test_extras_flattened(self):
        resp = Response.make_ok("ok", subscribers=[{"phone": "+84900000001", "fcm_id": "t"}])
        obj = json.loads(encode_response(resp))
        assert obj["subscribers"] == [{"phone": "+84900000001", "fcm_id": "t"}]
        assert set(obj) == {"result", "desc", "subscribers"}

    def test_extras_may_not_shadow_tags(self):
        with pytest.raises(ValueError):
            encode_response(Response("ok", "x", {"result": "oops"}))

    def test_decode_requires_both_tags(self):
        with pytest.raises(MissingField):
            decode_response('{"result":"ok"}')
        with pytest.raises(MissingField):
            decode_response('{"desc":"x"}')

    def test_decode_rejects_unknown_result(self):
        with pytest.raises(MalformedJson):
            decode_response('{"result":"partial","desc":"x"}')


class TestReadingCodec:
    @given(st.integers(min_value=0, max_value=10**6),
           st.floats(allow_nan=False, allow_infinity=False, width=32))
    def test_round_trip(self, channel, value):
        reading = decode_reading(encode_reading(channel, value))
        assert reading.channel == channel
        assert reading.value == value

    def test_direct_field_mapping(self):
        reading = decode_reading('{"channel":1,"value":51.2}')
        assert (reading.channel, reading.value) == (1, 51.2)

    def test_receipt_time_monotonic(self):
        first = decode_reading('{"channel":1,"value":1}')
        second = decode_reading('{"channel":1,"value":1}')
        assert second.received_at >= first.received_at

    def test_text_value_is_malformed(self):
        with pytest.raises(MalformedJson):
            decode_reading('{"channel":1,"value":"hot"}')

    @pytest.mark.parametrize("frame", ['{"channel":1,"value":NaN}',
                                       '{"channel":1,"value":Infinity}',
                                       '{"channel":1,"value":-Infinity}'])
    def test_non_finite_values_rejected(self, frame):
        with pytest.raises(NonFiniteValue):
            decode_reading(frame)

    def test_encode_rejects_non_finite(self):
        with pytest.raises(ValueError):
            encode_reading(1, math.nan)

    @pytest.mark.parametrize("frame", ['{"channel":true,"value":1}',
                                       '{"channel":1.5,"value":1}',
                                       '{"channel":-2,"value":1}',
                                       '{"channel":1,"value":true}'])
    def test_bad_field_types_malformed(self, frame):
        with pytest.raises(MalformedJson):
            decode_reading(frame)

    @pytest.mark.parametrize("frame", ['{"value":1}', '{"channel":1}'])
    def test_missing_fields(self, frame):
        with pytest.raises(MissingField):
            decode_reading(frame)


EXPECTED_ERRORS = {
    "malformed_json": MalformedJson,
    "unknown_action": UnknownAction,
    "missing_field": MissingField,
    "non_finite_value": NonFiniteValue,
}


def _fixture_cases(name):
    cases = []
    with open(FIXTURES / name, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                cases.append(json.loads(line))
    return cases


class TestProtocolFixtures:
    """The sample frames shipped with the protocol document must decode
    exactly as documented."""

    @pytest.mark.parametrize("case", _fixture_cases("commands.jsonl"),
                             ids=lambda c: c["name"])
    def test_command_fixtures(self, case):
        if case["expect"] == "ok":
            cmd = decode_command(case["frame"])
            assert cmd.action.value == case["action"]
            assert decode_command(encode_command(cmd)) == cmd
        else:
            with pytest.raises(EXPECTED_ERRORS[case["expect"]]):
                decode_command(case["frame"])

    @pytest.mark.parametrize("case", _fixture_cases("responses.jsonl"),
                             ids=lambda c: c["name"])
    def test_response_fixtures(self, case):
        resp = decode_response(case["frame"])
        assert resp.result == case["result"]
        assert resp.desc == case["desc"]

    @pytest.mark.parametrize("case", _fixture_cases("readings.jsonl"),
                             ids=lambda c: c["name"])
    def test_reading_fixtures(self, case):
        if case["expect"] == "ok":
            reading = decode_reading(case["frame"])
            assert reading.channel == case["channel"]
            assert reading.value == case["value"]
        else:
            with pytest.raises(EXPECTED_ERRORS[case["expect"]]):
                decode_reading(case["frame"])
