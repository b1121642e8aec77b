import time

import pytest
from fastapi.testclient import TestClient

from alcrf.corpus import SyntheticConfig, generate_synthetic
from alcrf.service import create_app


@pytest.fixture(scope="module")
def corpus():
    cfg = SyntheticConfig(n_sentences=60, schema={"A": 0.7, "B": 0.3}, min_len=4, max_len=8)
    return generate_synthetic(cfg, seed=33)


def session_config(**kw):
    base = dict(
        strategy="LTP",
        batch_size=4,
        n_iterations=2,
        n_seeds=1,
        n_seed_labeled=8,
        n_test=15,
        train_max_iter=30,
    )
    base.update(kw)
    return base


class FakeClock:
    def __init__(self):
        self.now = 1000.0

    def __call__(self):
        return self.now


def make_client(corpus, tmp_path, clock=None, lease_seconds=600.0):
    app = create_app(corpus, str(tmp_path), lease_seconds=lease_seconds,
                     clock=clock or time.monotonic)
    return TestClient(app)


def wait_status(client, predicate, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        st = client.get("/session/status").json()
        if predicate(st):
            return st
        time.sleep(0.02)
    raise AssertionError(f"timed out; last status {st}")


def submit_gold(client, corpus, task):
    gold = corpus.by_id(task["sentence_id"]).tags
    return client.post(f"/tasks/{task['task_id']}/labels", json={"tags": list(gold)})


def drive_to_completion(client, corpus, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        st = client.get("/session/status").json()
        if st["finished"]:
            return st
        assert not st["error"], st["error"]
        r = client.get("/tasks/next")
        if r.status_code == 204:
            time.sleep(0.02)
            continue
        assert submit_gold(client, corpus, r.json()).status_code == 200
    raise AssertionError("session did not finish in time")


class TestSessionLifecycle:
    def test_status_404_without_session(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        assert client.get("/session/status").status_code == 404
        assert client.get("/tasks/next").status_code == 404

    def test_start_opens_first_batch(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        r = client.post("/session/start", json=session_config())
        assert r.status_code == 200
        st = r.json()
        assert st["open_tasks"] == 4
        assert st["iteration"] == 1  # first selection round is open
        client.app.state.manager.close()

    def test_double_start_conflicts(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        assert client.post("/session/start", json=session_config()).status_code == 200
        assert client.post("/session/start", json=session_config()).status_code == 409
        client.app.state.manager.close()

    def test_bad_config_rejected(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        r = client.post("/session/start", json={"strategy": "NOPE"})
        assert r.status_code == 422

    def test_full_session_completes(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        cfg = session_config()
        client.post("/session/start", json=cfg)
        st = drive_to_completion(client, corpus)
        assert st["iteration"] == cfg["n_iterations"]
        assert st["open_tasks"] == 0
        assert st["latest_metrics"]["token_f1"] >= 0
        assert (tmp_path / "LTP_runs.csv").exists()


class TestTasks:
    def test_sequential_next_returns_distinct_tasks(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        seen = set()
        for _ in range(4):
            r = client.get("/tasks/next")
            assert r.status_code == 200
            task = r.json()
            assert task["task_id"] not in seen
            seen.add(task["task_id"])
            # pre-annotation must be aligned and BIO-valid
            assert len(task["proposed_tags"]) == len(task["tokens"])
            # per-token confidence for the proposed tag, for UI display
            assert len(task["token_probs"]) == len(task["tokens"])
            assert all(0.0 <= p <= 1.0 for p in task["token_probs"])
        assert client.get("/tasks/next").status_code == 204
        client.app.state.manager.close()

    def test_lease_expiry_reserves_task(self, corpus, tmp_path):
        clock = FakeClock()
        client = make_client(corpus, tmp_path, clock=clock, lease_seconds=600.0)
        client.post("/session/start", json=session_config())
        first = client.get("/tasks/next").json()
        clock.now += 601.0  # all leases expire
        again = client.get("/tasks/next").json()
        assert again["task_id"] == first["task_id"]
        client.app.state.manager.close()

    def test_submit_valid_closes_task(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        task = client.get("/tasks/next").json()
        r = submit_gold(client, corpus, task)
        assert r.status_code == 200 and r.json()["accepted"]
        st = client.get("/session/status").json()
        assert st["open_tasks"] == 3
        client.app.state.manager.close()

    def test_invalid_bio_rejected_with_position(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        task = client.get("/tasks/next").json()
        tags = ["O"] * len(task["tokens"])
        tags[1] = "I-A"
        r = client.post(f"/tasks/{task['task_id']}/labels", json={"tags": tags})
        assert r.status_code == 422
        assert r.json()["position"] == 1
        # task stays open for resubmission
        r2 = submit_gold(client, corpus, task)
        assert r2.status_code == 200
        client.app.state.manager.close()

    def test_wrong_length_rejected(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        task = client.get("/tasks/next").json()
        r = client.post(f"/tasks/{task['task_id']}/labels", json={"tags": ["O"]})
        assert r.status_code == 422
        client.app.state.manager.close()

    def test_unknown_task_404(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        r = client.post("/tasks/nope/labels", json={"tags": ["O"]})
        assert r.status_code == 404
        client.app.state.manager.close()

    def test_double_submit_conflicts(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        task = client.get("/tasks/next").json()
        assert submit_gold(client, corpus, task).status_code == 200
        assert submit_gold(client, corpus, task).status_code == 409
        client.app.state.manager.close()

    def test_idempotent_retry_with_request_id(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        task = client.get("/tasks/next").json()
        gold = list(corpus.by_id(task["sentence_id"]).tags)
        headers = {"x-request-id": "req-1"}
        r1 = client.post(f"/tasks/{task['task_id']}/labels", json={"tags": gold},
                         headers=headers)
        r2 = client.post(f"/tasks/{task['task_id']}/labels", json={"tags": gold},
                         headers=headers)
        assert r1.status_code == r2.status_code == 200
        assert r1.json() == r2.json()
        # without the header the same submit now conflicts
        r3 = client.post(f"/tasks/{task['task_id']}/labels", json={"tags": gold})
        assert r3.status_code == 409
        client.app.state.manager.close()

    def test_batch_completion_advances_iteration(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config(n_iterations=2))
        for _ in range(4):
            task = client.get("/tasks/next").json()
            submit_gold(client, corpus, task)
        st = wait_status(client, lambda s: s["iteration"] == 2 or s["finished"])
        assert st["iteration"] == 2
        client.app.state.manager.close()


class TestAdvance:
    def test_advance_with_open_tasks_conflicts(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        assert client.post("/session/advance").status_code == 409
        client.app.state.manager.close()


class TestRestart:
    def test_pending_submissions_survive_restart(self, corpus, tmp_path):
        client = make_client(corpus, tmp_path)
        client.post("/session/start", json=session_config())
        # submit half the batch, then kill the server
        for _ in range(2):
            task = client.get("/tasks/next").json()
            assert submit_gold(client, corpus, task).status_code == 200
        client.app.state.manager.close()

        client2 = make_client(corpus, tmp_path)
        r = client2.post("/session/start", json={**session_config(), "resume": True})
        assert r.status_code == 200
        st = client2.get("/session/status").json()
        assert st["open_tasks"] == 2  # two submissions were reloaded
        st = drive_to_completion(client2, corpus)
        assert st["finished"]
