import json

import httpx
import pytest

from strew.clue import (
    CLUE_FORMAT,
    ClueConfig,
    HttpModelClient,
    ModelClient,
    PerceptionRequest,
    ScriptedClient,
    extract_temporal_clues,
    run_batch,
    run_clue_perception,
    select_segments,
    upsample_request,
)
from strew.errors import BudgetInfeasible, ClientError
from strew.parsing import parse_response
from strew.types import ChoiceLetter, TemporalInterval, VideoRef

TI = TemporalInterval
VIDEO = VideoRef("file://clip.mp4", 60.0, 1.0, (320, 240))


def _parsed(text):
    return parse_response(f"<answer>{text}</answer>", CLUE_FORMAT, n_options=4)


def test_extract_clues_examples():
    assert extract_temporal_clues(_parsed("C, 10 to 20")) == [TI(10, 20)]
    assert extract_temporal_clues(_parsed("between 3.0 to 5.0 and 8.0 to 9.0")) == [TI(3, 5), TI(8, 9)]
    assert extract_temporal_clues(_parsed("the answer is C")) == []


def test_select_segments_examples():
    assert select_segments(VIDEO, [TI(10, 20)], 2) == [TI(8, 22)]
    assert select_segments(VIDEO, [TI(1, 3), TI(4, 6)], 1) == [TI(0, 7)]
    assert select_segments(VIDEO, [TI(0, 2)], 5) == [TI(0, 7)]
    assert select_segments(VIDEO, [TI(55, 59)], 3) == [TI(52, 60)]
    assert select_segments(VIDEO, [TI(1, 2), TI(30, 31)], 1) == [TI(0, 3), TI(29, 32)]


def test_upsample_examples():
    seg = [TI(8, 22)]
    assert upsample_request(VIDEO, seg, 1.0, 4.0, "q", 1e12).fps == 4.0
    at_base = 14 * 1.0 * 320 * 240
    r = upsample_request(VIDEO, seg, 2.0, 4.0, "q", at_base)
    assert (r.fps, r.resolution) == (1.0, (320, 240))
    assert upsample_request(VIDEO, seg, 2.0, 1.0, "q", 1e12).resolution == (640, 480)


def test_upsample_respects_budget_fps_first():
    seg = [TI(0, 10)]
    budget = 10 * 320 * 240 * 3.0
    r = upsample_request(VIDEO, seg, 2.0, 4.0, "q", budget)
    assert r.cost <= budget
    assert r.fps == 3.0 and r.resolution == (320, 240)
    with pytest.raises(BudgetInfeasible):
        upsample_request(VIDEO, seg, 2.0, 2.0, "q", budget / 10)


def test_two_pass_session_keeps_both_answers():
    client = ScriptedClient({VIDEO.uri: {"first": "<answer>A, 10 to 20</answer>", "second": "<answer>B, 11 to 19</answer>"}})
    s = run_clue_perception(client, VIDEO, "what?", 2.0, 2.0, n_options=4)
    assert s.first_answer.payload.choice == ChoiceLetter("A")
    assert s.final_choice() == ChoiceLetter("B")
    assert s.segments == [TI(8, 22)] and s.second_request.fps == 2.0 and s.n_calls == 2
    assert not s.fallback


def test_clueless_first_answer_falls_back():
    client = ScriptedClient({VIDEO.uri: {"first": "<answer>the answer is C</answer>", "second": "never used"}})
    s = run_clue_perception(client, VIDEO, "what?", 2.0, 2.0, n_options=4)
    assert s.fallback and s.final_answer is s.first_answer and s.n_calls == 1
    assert s.to_dict()["second_request"] is None


class _Failing(ModelClient):
    def __init__(self, fail_on):
        self.fail_on, self.calls = fail_on, 0

    def answer(self, request):
        self.calls += 1
        if self.calls == self.fail_on:
            raise TimeoutError("model timed out")
        return "<answer>A, 1 to 2</answer>"


@pytest.mark.parametrize("fail_on,phase", [(1, "initial"), (2, "refine")])
def test_client_errors_carry_phase(fail_on, phase):
    with pytest.raises(ClientError) as err:
        run_clue_perception(_Failing(fail_on), VIDEO, "q", 2.0, 2.0)
    assert err.value.phase == phase


def test_http_client_wire_format():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"text": "<answer>D, 3 to 4</answer>"})

    client = HttpModelClient("http://model/answer", transport=httpx.MockTransport(handler))
    s = run_clue_perception(client, VIDEO, "q", 2.0, 2.0)
    assert s.final_choice() == ChoiceLetter("D")
    first, second = seen
    assert set(first) == {"video_uri", "time_range", "fps", "resolution", "prompt"}
    assert first["time_range"] == [[0.0, 60.0]] and first["fps"] == 1.0 and first["resolution"] == [320, 240]
    assert second["time_range"] == [[1.0, 6.0]] and second["fps"] == 2.0


def test_http_client_rejects_bad_body():
    client = HttpModelClient("http://m", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"x": 1})))
    with pytest.raises(ClientError):
        run_clue_perception(client, VIDEO, "q", 2.0, 2.0)


def test_request_validation():
    with pytest.raises(ValueError):
        PerceptionRequest(VIDEO, (TI(0, 61),), 1.0, (320, 240), "q")
    with pytest.raises(ValueError):
        PerceptionRequest(VIDEO, (TI(0, 6),), 0.0, (320, 240), "q")


def test_run_batch_keeps_order(tmp_path):
    videos = [VideoRef(f"v{i}", 30.0) for i in range(6)]
    script = {v.uri: {"first": f"<answer>A, {i} to {i + 1}</answer>", "second": f"<answer>B, {i} to {i + 1}</answer>"} for i, v in enumerate(videos)}
    path = tmp_path / "script.json"
    path.write_text(json.dumps(script))
    client = ScriptedClient.from_file(path)

    class _T:
        def __init__(self, v):
            self.video, self.question, self.n_options = v, "q", 4

    sessions = run_batch(client, [_T(v) for v in videos], ClueConfig(max_parallel=3))
    assert [s.first_request.video.uri for s in sessions] == [v.uri for v in videos]
