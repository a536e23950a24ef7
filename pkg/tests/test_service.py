"""HTTP boundary: command dispatch, event logging, bit-exact replay, the
scripted-session equality with the library strategy, and the redaction
firewall under sentinel outcomes."""

import json
import math
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from chisel import ModeConfig, StrategyConfig, load_dataset, proportional_alpha_run
from chisel.scorers import ScorerSpec
from chisel.service import (SessionStore, create_app, jsonable, parse_cap,
                            redact_report)
from chisel.testing import default_alpha_min

INF = float("inf")


def make_csv(n=80, d=3, seed=3, signal=1.2, noise=1.0, offset=0.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    y = offset + signal * x[:, 0] + noise * rng.normal(size=n)
    header = ",".join([f"x{j+1}" for j in range(d)] + ["y"])
    rows = [",".join(repr(float(v)) for v in np.append(x[i], y[i]))
            for i in range(n)]
    return "\n".join([header] + rows)


@pytest.fixture()
def client(tmp_path):
    app = create_app(log_dir=str(tmp_path / "logs"))
    with TestClient(app) as c:
        yield c


def create(client, csv=None, **kw):
    body = dict(kw)
    if "dgp" not in body:
        body["csv"] = csv if csv is not None else make_csv()
    r = client.post("/sessions", json=body)
    assert r.status_code == 200, r.text
    return r.json()


def command(client, sid, payload, status=200):
    r = client.post(f"/sessions/{sid}/commands", json=payload)
    assert r.status_code == status, r.text
    return r.json()


# ---------------------------------------------------------------------------
# Wire format


class TestWire:
    def test_nonfinite_floats_become_strings(self):
        assert jsonable(INF) == "inf"
        assert jsonable(-INF) == "-inf"
        assert jsonable(float("nan")) == "nan"
        assert jsonable({"a": [INF, 1.5]}) == {"a": ["inf", 1.5]}

    def test_finite_floats_survive_shortest_roundtrip(self):
        v = 0.1 + 0.2
        assert json.dumps(jsonable(v)) == "0.30000000000000004"
        assert json.loads(json.dumps(jsonable(v))) == v

    def test_numpy_scalars_and_arrays(self):
        out = jsonable({"a": np.float64(2.5), "b": np.arange(3),
                        "c": np.int64(7)})
        assert out == {"a": 2.5, "b": [0, 1, 2], "c": 7}

    def test_parse_cap(self):
        assert parse_cap(None) == INF
        assert parse_cap("inf") == INF
        assert parse_cap("-Infinity") == -INF
        assert parse_cap(1.25) == 1.25
        assert parse_cap("1.25") == 1.25
        with pytest.raises(ValueError):
            parse_cap("nan")
        with pytest.raises(ValueError):
            parse_cap("tall")


# ---------------------------------------------------------------------------
# Session creation


class TestCreate:
    def test_fresh_view_shows_everything_masked_and_nothing_spent(self, client):
        made = create(client, make_csv(n=40))
        view = client.get(f"/sessions/{made['id']}").json()
        assert view["n_masked"] == 40
        assert view["ledger"]["spends"] == []
        assert view["revealed"] == []
        assert view["tests"] == []
        assert not view["finalized"]

    def test_exactly_one_dataset_source(self, client):
        assert client.post("/sessions", json={}).status_code == 400
        both = {"csv": make_csv(n=10),
                "dgp": {"family": "linear_rct", "n": 10}}
        assert client.post("/sessions", json=both).status_code == 400

    def test_dgp_create_defaults_cutoff_to_the_family(self, client):
        made = create(client, csv=None, dgp={
            "family": "binary_logistic", "n": 30, "cutoff": 0.65,
            "params": {"d": 3, "tau": 0.6, "beta_norm": 1.0},
        }, mode={"mode": "binary"}, seed=5)
        assert made["mode"]["cutoff"] == 0.65
        assert made["n"] == 30

    def test_unknown_mode_field_rejected(self, client):
        r = client.post("/sessions", json={"csv": make_csv(n=10),
                                           "mode": {"n_mins": 3}})
        assert r.status_code == 400
        assert "n_mins" in r.json()["detail"]

    def test_binary_mode_needs_binary_outcomes(self, client):
        r = client.post("/sessions", json={
            "csv": make_csv(n=10),
            "mode": {"mode": "binary", "cutoff": 0.5},
        })
        assert r.status_code == 400

    def test_create_response_echoes_no_outcome_values(self, client):
        csv = make_csv(n=12, seed=9, offset=431.0)
        r = client.post("/sessions", json={"csv": csv})
        for token in ("431", "csv"):
            assert token not in r.text

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/commands",
                           json={"kind": "view"}).status_code == 404
        assert client.get("/sessions/nope/log").status_code == 404


# ---------------------------------------------------------------------------
# Commands


class TestCommands:
    def test_constant_scorer_uncapped_reveals_every_tied_row(self, client):
        made = create(client, make_csv(n=25))
        res = command(client, made["id"], {
            "kind": "chisel", "cap": "inf",
            "scorer": {"family": "constant", "params": {"value": 1.5}},
        })["result"]
        assert res["psi"] == 1.5
        assert res["n_masked"] == 0
        assert sorted(res["revealed_idx"]) == list(range(25))

    def test_cap_must_be_real_or_inf(self, client):
        sid = create(client, make_csv(n=10))["id"]
        spec = {"family": "constant"}
        command(client, sid, {"kind": "chisel", "scorer": spec, "cap": "nan"},
                status=400)
        command(client, sid, {"kind": "chisel", "scorer": spec, "cap": "big"},
                status=400)

    def test_chisel_takes_exactly_one_scorer_reference(self, client):
        sid = create(client, make_csv(n=10))["id"]
        command(client, sid, {"kind": "chisel"}, status=400)
        command(client, sid, {"kind": "chisel", "scorer": {"family": "constant"},
                              "scorer_id": "abc"}, status=400)
        command(client, sid, {"kind": "chisel", "scorer_id": "missing"},
                status=400)

    def test_fitted_scorer_is_reusable_by_id(self, client):
        sid = create(client, make_csv(n=30), mode={"n_min": 5})["id"]
        command(client, sid, {"kind": "reveal_random", "k": 10})
        first = command(client, sid, {
            "kind": "chisel", "scorer": {"family": "linear"}, "cap": 0.0,
        })["result"]
        again = command(client, sid, {
            "kind": "chisel", "scorer_id": first["scorer_id"],
        })["result"]
        assert again["scorer_id"] == first["scorer_id"]
        assert again["n_masked"] <= first["n_masked"]

    def test_reveal_random_validates_k(self, client):
        sid = create(client, make_csv(n=10))["id"]
        command(client, sid, {"kind": "reveal_random", "k": 99}, status=400)
        command(client, sid, {"kind": "reveal_random", "k": -1}, status=400)
        res = command(client, sid, {"kind": "reveal_random", "k": 0})["result"]
        assert res["psi"] == "-inf"
        assert res["n_masked"] == 10

    def test_missing_payload_fields_are_400(self, client):
        sid = create(client, make_csv(n=10))["id"]
        command(client, sid, {"kind": "test"}, status=400)
        command(client, sid, {"kind": "reveal_random"}, status=400)
        command(client, sid, {"kind": "propose_alpha"}, status=400)
        command(client, sid, {"kind": "create"}, status=400)
        command(client, sid, {"kind": "sculpt"}, status=400)

    def test_oversized_alpha_is_clipped_not_refused(self, client):
        sid = create(client, make_csv(n=40), alpha=0.05,
                     mode={"n_min": 5})["id"]
        res = command(client, sid, {"kind": "test", "alpha": 0.9})["result"]
        assert res["alpha_requested"] == 0.9
        assert res["alpha_t"] <= 0.05 + 1e-12
        view = client.get(f"/sessions/{sid}").json()
        assert view["ledger"]["spent_aggregate"] <= 0.05 + 1e-12

    def test_gaussian_records_stay_redacted_until_rejection(self, client):
        sid = create(client, make_csv(n=40), mode={"n_min": 5})["id"]
        res = command(client, sid, {"kind": "test", "alpha": 0.01})["result"]
        assert not res["rejected"]
        for hidden in ("statistic", "sigma2_hat", "m_t", "c_t", "masked_sum"):
            assert hidden not in res

    def test_finalized_session_accepts_only_view_and_replay(self, client):
        sid = create(client, make_csv(n=20))["id"]
        command(client, sid, {"kind": "finalize"})
        command(client, sid, {"kind": "view"})
        assert command(client, sid, {"kind": "replay"})["result"]["match"]
        for bad in ({"kind": "test", "alpha": 0.01},
                    {"kind": "reveal_random", "k": 1},
                    {"kind": "propose_alpha", "alpha": 0.01},
                    {"kind": "finalize"}):
            command(client, sid, bad, status=409)
        assert client.get(f"/sessions/{sid}").json()["finalized"]

    def test_propose_alpha_changes_nothing(self, client):
        sid = create(client, make_csv(n=20))["id"]
        before = client.get(f"/sessions/{sid}").json()["digest"]
        res = command(client, sid, {"kind": "propose_alpha", "alpha": 0.2})
        assert res["result"]["granted"] == 1.0 - (1.0 - 0.05) / 1.0
        assert res["digest"] == before
        command(client, sid, {"kind": "propose_alpha", "alpha": -0.1},
                status=400)


# ---------------------------------------------------------------------------
# Event log


class TestEventLog:
    def test_sequence_is_monotone_and_digests_track_state(self, client):
        made = create(client, make_csv(n=30), mode={"n_min": 5})
        sid = made["id"]
        command(client, sid, {"kind": "view"})
        command(client, sid, {"kind": "reveal_random", "k": 5})
        command(client, sid, {"kind": "propose_alpha", "alpha": 0.01})
        command(client, sid, {"kind": "test", "alpha": 0.01})
        lines = [json.loads(l) for l in
                 client.get(f"/sessions/{sid}/log").text.splitlines()]
        assert [e["seq"] for e in lines] == [1, 2, 3, 4, 5]
        kinds = [e["command"]["kind"] for e in lines]
        assert kinds == ["create", "view", "reveal_random", "propose_alpha",
                         "test"]
        # pure commands leave the digest alone; state commands move it
        assert lines[1]["digest"] == lines[0]["digest"]
        assert lines[2]["digest"] != lines[1]["digest"]
        assert lines[3]["digest"] == lines[2]["digest"]
        assert lines[4]["digest"] != lines[3]["digest"]
        draws = [e["rng_draws"] for e in lines]
        assert draws == sorted(draws)

    def test_analyst_log_redacts_the_dataset_payload(self, client):
        csv = make_csv(n=15, seed=2, offset=977.0)
        sid = create(client, csv, seed=41)["id"]
        text = client.get(f"/sessions/{sid}/log").text
        first = json.loads(text.splitlines()[0])["command"]
        assert first["kind"] == "create"
        assert set(first["dataset"]) == {"kind", "n", "d", "dataset_id"}
        assert "977" not in text
        assert "41" not in json.dumps(first["dataset"])

    def test_failed_commands_append_no_event(self, client):
        sid = create(client, make_csv(n=10))["id"]
        command(client, sid, {"kind": "reveal_random", "k": 99}, status=400)
        lines = client.get(f"/sessions/{sid}/log").text.splitlines()
        assert len(lines) == 1

    def test_full_log_lands_on_disk(self, tmp_path):
        app = create_app(log_dir=str(tmp_path))
        with TestClient(app) as c:
            csv = make_csv(n=12)
            sid = create(c, csv)["id"]
            command(c, sid, {"kind": "reveal_random", "k": 3})
        path = tmp_path / f"{sid}.jsonl"
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(lines) == 2
        assert lines[0]["command"]["dataset"]["csv"] == csv


# ---------------------------------------------------------------------------
# Replay


class TestReplay:
    def drive(self, client, sid):
        command(client, sid, {"kind": "reveal_random", "k": 8})
        res = command(client, sid, {
            "kind": "chisel", "scorer": {"family": "linear"}, "cap": 0.0,
        })["result"]
        command(client, sid, {"kind": "test", "alpha": 0.01})
        command(client, sid, {"kind": "chisel", "scorer_id": res["scorer_id"]})
        command(client, sid, {"kind": "test", "alpha": 0.015})

    def test_replay_matches_event_for_event(self, client):
        sid = create(client, make_csv(n=40), mode={"n_min": 5})["id"]
        self.drive(client, sid)
        out = command(client, sid, {"kind": "replay"})["result"]
        assert out["match"] is True
        assert out["mismatches"] == []
        assert out["digest"] == client.get(f"/sessions/{sid}").json()["digest"]
        assert out["applied"] == 5

    def test_replay_reproduces_randomized_draws(self, client):
        # randomized rounding consumes session RNG; replay must re-draw it
        rng = np.random.default_rng(0)
        y = (rng.random(60) < 0.55).astype(float)
        header = "x1,y"
        rows = [f"{repr(float(v))},{int(t)}" for v, t in zip(rng.normal(size=60), y)]
        csv = "\n".join([header] + rows)
        sid = create(client, csv, session_seed=123, alpha=0.1, mode={
            "mode": "binary", "cutoff": 0.5, "deterministic_rounding": False,
        })["id"]
        command(client, sid, {"kind": "reveal_random", "k": 6})
        first = command(client, sid, {"kind": "test", "alpha": 0.02})
        if not first["result"]["finalized"]:
            command(client, sid, {"kind": "test", "alpha": 0.03})
        view = client.get(f"/sessions/{sid}").json()
        assert view["rng_draws"] >= 1
        out = command(client, sid, {"kind": "replay"})["result"]
        assert out["match"] is True

    def test_replayed_report_redacts_like_the_view(self, client):
        sid = create(client, make_csv(n=40), mode={"n_min": 5})["id"]
        self.drive(client, sid)
        report = command(client, sid, {"kind": "replay"})["result"]["report"]
        for record in report["tests"]:
            if not record["rejected"]:
                assert "statistic" not in record


# ---------------------------------------------------------------------------
# Scripted session == library strategy


def drive_proportional(client, sid, *, n, alpha, p, n_min, scorer_spec,
                       mode="gaussian", strict=True, alpha0=0.0):
    """Mirror of the proportional strategy as an HTTP client: same reveal,
    same boundary walk with its refit cadence, same budget-release
    arithmetic, so the resulting session must match the library run bit for
    bit."""
    post = lambda body: command(client, sid, body)["result"]

    def admissible(n_t):
        return n_t >= n_min or mode == "binary" or not strict

    k0 = min(math.ceil(p * n), n)
    n_masked = post({"kind": "reveal_random", "k": k0})["n_masked"]

    batch = max(1, math.ceil(0.05 * n))
    scorer_id = None
    need_fit = True
    since_fit = 0
    while n_masked > 0:
        body = {"kind": "chisel", "cap": 0.0}
        if need_fit:
            body["scorer"] = scorer_spec
        else:
            body["scorer_id"] = scorer_id
        res = post(body)
        need_fit = False
        scorer_id = res["scorer_id"]
        got = len(res["revealed_idx"])
        n_masked = res["n_masked"]
        if got:
            since_fit += got
            if since_fit >= batch and n_masked > 0:
                need_fit = True
                since_fit = 0
            continue
        if since_fit == 0:
            break
        need_fit = True
        since_fit = 0

    n_nu = n_masked
    spends = []
    alpha_min = default_alpha_min(alpha)
    need_fit = True
    since_fit = 0
    finalized = False
    while n_masked > 0 and not finalized:
        n_t = n_masked
        if n_nu > n_min and n_t >= n_min:
            frac = min(1.0, max(0.0, (n_nu - n_t) / (n_nu - n_min)))
        else:
            frac = 1.0
        alpha_budget = alpha0 + frac * (alpha - alpha0)
        not_spent = 1.0
        for a in spends:
            not_spent *= 1.0 - a
        if not_spent > 0:
            remaining = max(0.0, 1.0 - (1.0 - alpha) / not_spent)
            alpha_t = 1.0 - (1.0 - alpha_budget) / not_spent
        else:
            remaining = 0.0
            alpha_t = 0.0
        alpha_t = max(0.0, min(alpha_t, remaining))
        if alpha_t < alpha_min:
            alpha_t = 0.0
        if not admissible(n_t):
            alpha_t = 0.0
        if alpha_t > 0.0:
            res = post({"kind": "test", "alpha": alpha_t})
            spends.append(res["alpha_t"])
            if res["rejected"]:
                break
        if n_t < n_min:
            break
        if since_fit >= batch:
            need_fit = True
            since_fit = 0
        body = {"kind": "chisel", "cap": "inf"}
        if need_fit:
            body["scorer"] = scorer_spec
            need_fit = False
        else:
            body["scorer_id"] = scorer_id
        res = post(body)
        scorer_id = res["scorer_id"]
        got = len(res["revealed_idx"])
        n_masked = res["n_masked"]
        since_fit += got
        if not got:
            break


class TestScriptedEqualsLibrary:
    @pytest.mark.parametrize("signal,seed", [(1.2, 3), (0.0, 5)])
    def test_scripted_session_reproduces_the_proportional_report(
            self, client, signal, seed):
        n = 80
        csv = make_csv(n=n, d=3, seed=seed, signal=signal)
        mode = {"cutoff": 0.0, "n_min": 10}
        sid = create(client, csv, alpha=0.05, seed=17, mode=mode)["id"]
        drive_proportional(client, sid, n=n, alpha=0.05, p=0.2, n_min=10,
                           scorer_spec={"family": "linear"})
        http_report = command(client, sid, {"kind": "replay"})["result"]["report"]

        dataset = load_dataset(csv, seed=17)
        cfg = StrategyConfig(
            mode_config=ModeConfig(cutoff=0.0, n_min=10), alpha=0.05, p=0.2,
            scorer=ScorerSpec("linear"),
        )
        lib = proportional_alpha_run(dataset, cfg)
        want = jsonable(redact_report(lib))
        want["meta"] = {}
        http_report["meta"] = {}
        assert http_report == want
        if signal > 0:
            assert lib.rejected  # the strong-signal case must reject


# ---------------------------------------------------------------------------
# Firewall


SENTINEL_BASE = 700001.0


class TestFirewall:
    def sentinel_csv(self, n=30, seed=12):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 2))
        header = "x1,x2,y"
        rows = [f"{repr(float(x[i, 0]))},{repr(float(x[i, 1]))},"
                f"{repr(SENTINEL_BASE + i)}" for i in range(n)]
        return "\n".join([header] + rows)

    def assert_no_masked_sentinel(self, text, revealed, n):
        for i in range(n):
            if i in revealed:
                continue
            assert repr(SENTINEL_BASE + i) not in text, f"row {i} leaked"

    def test_no_masked_outcome_in_any_response(self, client):
        n = 30
        # cutoff far above every sentinel: tests never reject, so nothing
        # is ever legitimately exposed
        made = create(client, self.sentinel_csv(n=n),
                      mode={"cutoff": 2e6, "n_min": 5})
        sid = made["id"]
        revealed = set()

        def run(body, status=200):
            r = client.post(f"/sessions/{sid}/commands", json=body)
            assert r.status_code == status, r.text
            if status == 200 and r.json()["result"].get("revealed_idx"):
                revealed.update(r.json()["result"]["revealed_idx"])
            self.assert_no_masked_sentinel(r.text, revealed, n)
            return r.json()

        self.assert_no_masked_sentinel(
            client.get(f"/sessions/{sid}").text, revealed, n)
        run({"kind": "reveal_random", "k": 5})
        run({"kind": "chisel", "cap": "inf",
             "scorer": {"family": "coordinate", "params": {"dim": 0}}})
        run({"kind": "test", "alpha": 0.02})
        run({"kind": "propose_alpha", "alpha": 0.01})
        run({"kind": "test", "alpha": 0.02})
        run({"kind": "replay"})
        run({"kind": "finalize"})
        run({"kind": "replay"})
        for path in (f"/sessions/{sid}", f"/sessions/{sid}/log"):
            self.assert_no_masked_sentinel(client.get(path).text, revealed, n)
        assert 0 < len(revealed) < n

    def test_revealed_rows_do_appear(self, client):
        # the check above is only meaningful if reveal genuinely exposes
        n = 10
        sid = create(client, self.sentinel_csv(n=n), mode={"cutoff": 2e6})["id"]
        command(client, sid, {"kind": "reveal_random", "k": 3})
        view = client.get(f"/sessions/{sid}")
        shown = {row["index"] for row in view.json()["revealed"]}
        assert len(shown) == 3
        for i in shown:
            assert repr(SENTINEL_BASE + i) in view.text


# ---------------------------------------------------------------------------
# Concurrency


class TestConcurrency:
    def test_interleaved_commands_keep_the_log_replayable(self, client):
        sid = create(client, make_csv(n=64), mode={"n_min": 5})["id"]
        errors = []

        def reveals():
            for _ in range(10):
                command(client, sid, {"kind": "reveal_random", "k": 1})

        def queries():
            for _ in range(20):
                r = client.post(f"/sessions/{sid}/commands",
                                json={"kind": "propose_alpha", "alpha": 0.01})
                if r.status_code != 200:
                    errors.append(r.text)
                client.get(f"/sessions/{sid}")

        threads = [threading.Thread(target=reveals),
                   threading.Thread(target=queries)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        lines = [json.loads(l) for l in
                 client.get(f"/sessions/{sid}/log").text.splitlines()]
        seqs = [e["seq"] for e in lines]
        assert seqs == list(range(1, len(lines) + 1))
        out = command(client, sid, {"kind": "replay"})["result"]
        assert out["match"] is True
        assert client.get(f"/sessions/{sid}").json()["n_masked"] == 54
