import json

import pytest
from fastapi.testclient import TestClient

from prefsearch.kb import kb_to_document
from prefsearch.service import create_app
from prefsearch.session import SessionStore


@pytest.fixture()
def client(kb):
    store = SessionStore()
    store.add_kb(kb)
    app = create_app(store)
    with TestClient(app) as c:
        c.store = store
        yield c


class TestKbEndpoints:
    def test_post_kb(self, client, kb):
        doc = kb_to_document(kb)
        doc["id"] = "second"
        r = client.post("/kbs", json=doc)
        assert r.status_code == 200
        assert r.json() == {"kb_id": "second"}

    def test_invalid_kb_is_a_400_envelope(self, client):
        r = client.post("/kbs", json={"id": "x", "slots": [], "items": [],
                                      "bogus": 1})
        assert r.status_code == 400
        body = r.json()
        assert body["error"]["code"] == "invalid_kb"
        assert "bogus" in body["error"]["message"]

    def test_facets_with_constraint_expression(self, client):
        r = client.get("/kbs/hotels-sample/facets",
                       params={"constraints": "type = hotel; location = kyoto"})
        assert r.status_code == 200
        body = r.json()
        assert body["size"] == 15
        assert body["facets"]["location"]["kyoto"] == 15

    def test_facets_unknown_kb_404(self, client):
        r = client.get("/kbs/none/facets")
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "not_found"

    def test_bad_constraint_expression_400(self, client):
        r = client.get("/kbs/hotels-sample/facets",
                       params={"constraints": "stars >"})
        assert r.status_code == 400


class TestSessionEndpoints:
    def test_create_returns_greeting(self, client):
        r = client.post("/sessions", json={"kb_id": "hotels-sample"})
        assert r.status_code == 200
        body = r.json()
        assert body["greeting"].startswith("Hello, welcome")
        assert body["session_id"]

    def test_create_unknown_kb_404(self, client):
        r = client.post("/sessions", json={"kb_id": "none"})
        assert r.status_code == 404

    def test_turn_round_trip(self, client):
        sid = client.post("/sessions",
                          json={"kb_id": "hotels-sample"}).json()["session_id"]
        r = client.post(f"/sessions/{sid}/turns",
                        json={"text": "a hotel in Kyoto but not in Minami "
                                      "with free Wi-Fi and non smoking rooms",
                              "confidence": 0.75154209})
        assert r.status_code == 200
        body = r.json()
        assert body["system_act"]["type"] == "request"
        assert "location = kyoto" in body["delta"]["constraints_added"]

    def test_turn_unknown_session_404(self, client):
        r = client.post("/sessions/ghost/turns", json={"text": "hello"})
        assert r.status_code == 404

    def test_empty_text_400(self, client):
        sid = client.post("/sessions",
                          json={"kb_id": "hotels-sample"}).json()["session_id"]
        r = client.post(f"/sessions/{sid}/turns", json={"text": "  "})
        assert r.status_code == 400

    def test_conflict_while_turn_in_flight_409(self, client):
        sid = client.post("/sessions",
                          json={"kb_id": "hotels-sample"}).json()["session_id"]
        lock = client.store._locks[sid]
        assert lock.acquire(blocking=False)
        try:
            r = client.post(f"/sessions/{sid}/turns", json={"text": "hello"})
            assert r.status_code == 409
            assert r.json()["error"]["code"] == "conflict"
        finally:
            lock.release()

    def test_state_document_matches_store(self, client):
        sid = client.post("/sessions",
                          json={"kb_id": "hotels-sample"}).json()["session_id"]
        client.post(f"/sessions/{sid}/turns",
                    json={"text": "stars > 2", "confidence": 1.0})
        via_http = client.get(f"/sessions/{sid}/state").json()
        direct = client.store.get_state(sid)
        assert json.dumps(via_http, sort_keys=True) \
            == json.dumps(direct, sort_keys=True)

    def test_delete_204_then_404(self, client):
        sid = client.post("/sessions",
                          json={"kb_id": "hotels-sample"}).json()["session_id"]
        r = client.delete(f"/sessions/{sid}")
        assert r.status_code == 204
        assert client.get(f"/sessions/{sid}/state").status_code == 404
