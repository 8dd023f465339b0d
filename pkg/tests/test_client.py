import itertools
import socket
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from httpburst import wire
from httpburst.client import (
    FetchError,
    FetchPlan,
    Mode,
    ObjectCache,
    diff_cache,
    fetch_page,
    partition_missing,
)
from httpburst.html_extract import PageManifest
from httpburst.server import ServerConfig, running_server

IMAGES = ["/img/img1.jpg", "/img/img2.jpg", "/img/img3.jpg", "/img/img4.jpg"]
FIXED = ["/fonts/font.woff2", "/css/style.css", "/js/jquery.js"]


def _stats(port):
    with socket.create_connection(("127.0.0.1", port)) as s:
        s.sendall(wire.encode_get("/_stats"))
        body = wire.read_response(wire.StreamReader(s.recv)).body.decode()
    return dict(line.split("=") for line in body.split())


def _plan(server, mode, c, **kw):
    return FetchPlan("/index.html", mode, c, "127.0.0.1", server.port, **kw)


def test_round_robin_two_connections():
    refs = ["/1", "/2", "/3", "/4"]
    assert partition_missing(refs, 2) == [["/1", "/3"], ["/2", "/4"]]


def test_single_ref_many_connections():
    assert partition_missing(["/only"], 6) == [["/only"]]


def _brute_force_makespan(sizes, c):
    best = None
    for assign in itertools.product(range(c), repeat=len(sizes)):
        loads = [0] * c
        for s, g in zip(sizes, assign):
            loads[g] += s
        best = max(loads) if best is None else min(best, max(loads))
    return best


def test_lpt_instance_against_brute_force():
    refs = ["/a", "/b", "/c", "/d", "/e"]
    sizes = dict(zip(refs, [5, 4, 3, 3, 3]))
    groups = partition_missing(refs, 2, sizes)
    totals = sorted(sum(sizes[r] for r in g) for g in groups)
    # LPT: 5|4, 3->4, 3->5, 3->7  =>  {5,3}=8 and {4,3,3}=10
    assert totals == [8, 10]
    assert groups == [["/a", "/d"], ["/b", "/c", "/e"]]
    optimum = _brute_force_makespan([5, 4, 3, 3, 3], 2)
    assert optimum == 9
    assert max(totals) <= 4 / 3 * optimum


def test_partition_errors():
    with pytest.raises(ValueError):
        partition_missing([], 2)
    with pytest.raises(ValueError):
        partition_missing(["/a"], 0)


@given(
    st.lists(st.integers(0, 100), min_size=1, max_size=30),
    st.integers(1, 10),
    st.booleans(),
)
def test_partition_properties(sizes_list, c, sized):
    refs = [f"/o{i}" for i in range(len(sizes_list))]
    sizes = dict(zip(refs, sizes_list)) if sized else None
    groups = partition_missing(refs, c, sizes)
    flat = [r for g in groups for r in g]
    assert sorted(flat) == sorted(refs) and len(flat) == len(set(flat))
    assert 1 <= len(groups) <= c
    assert all(groups)
    for g in groups:
        assert g == sorted(g, key=refs.index)
    if not sized:
        lens = [len(g) for g in groups]
        assert max(lens) - min(lens) <= 1


def test_diff_cache():
    manifest = PageManifest("/index.html", tuple(IMAGES))
    cache = ObjectCache()
    assert diff_cache(manifest, cache) == IMAGES
    cache.put(IMAGES[0], b"x")
    cache.put(IMAGES[2], b"y")
    assert diff_cache(manifest, cache) == [IMAGES[1], IMAGES[3]]
    for p in IMAGES:
        cache.put(p, b"z")
    assert diff_cache(manifest, cache) == []


@pytest.mark.parametrize("mode, c, expected", [("get", 1, 8), ("get", 6, 8), ("burst", 1, 2), ("burst", 2, 3), ("burst", 6, 3 + 4)])
def test_request_count_law(server, mode, c, expected):
    # fixture page: 3 fixed assets + 4 images = 7 objects
    server.reset_stats()
    result = fetch_page(_plan(server, mode, c))
    assert result.request_count == expected
    assert int(_stats(server.port)["requests_total"]) == expected
    assert int(_stats(server.port)["burst_requests"]) == (0 if mode == "get" else expected - 1)


def test_four_image_page_message_counts(tmp_path):
    (tmp_path / "index.html").write_text("".join(f'<img src="img{i}.jpg">' for i in range(1, 5)))
    for i in range(1, 5):
        (tmp_path / f"img{i}.jpg").write_bytes(bytes([i]) * 100)
    with running_server(ServerConfig(tmp_path, port=0)) as srv:
        for mode, c, expected in [("get", 2, 5), ("burst", 1, 2), ("burst", 2, 3)]:
            srv.reset_stats()
            result = fetch_page(_plan(srv, mode, c))
            assert srv.requests_total == expected
            assert len(result.objects) == 4


def test_content_equivalence_and_cache(server, docroot):
    via_get = fetch_page(_plan(server, "get", 3))
    via_burst = fetch_page(_plan(server, "burst", 2))
    assert via_get.objects == via_burst.objects
    assert set(via_get.objects) == set(FIXED + IMAGES)
    for path, body in via_burst.objects.items():
        assert body == (docroot / path.lstrip("/")).read_bytes()


def test_second_fetch_only_html(server):
    cache = ObjectCache()
    first = fetch_page(_plan(server, "burst", 6), cache)
    assert len(cache) == 7
    server.reset_stats()
    second = fetch_page(_plan(server, "burst", 6), cache)
    assert second.request_count == 1 and server.requests_total == 1
    assert second.objects == first.objects
    assert second.from_cache == set(first.objects)


def test_partial_cache_bursts_only_missing(server):
    cache = ObjectCache()
    cache.put("/css/style.css", b"cached css")
    server.reset_stats()
    result = fetch_page(_plan(server, "burst", 1), cache)
    assert result.request_count == 2
    assert result.objects["/css/style.css"] == b"cached css"


def test_missing_object_recorded_as_404(docroot, server):
    (docroot / "img" / "img3.jpg").unlink()
    for mode in ("get", "burst"):
        result = fetch_page(_plan(server, mode, 2))
        assert result.statuses["/img/img3.jpg"] == 404
        assert "/img/img3.jpg" not in result.objects
        assert set(result.statuses) == set(FIXED + IMAGES)


def test_size_aware_partition_used(server, docroot):
    sizes = {p: (docroot / p.lstrip("/")).stat().st_size for p in FIXED + IMAGES}
    result = fetch_page(_plan(server, "burst", 3, sizes=sizes))
    assert len(result.objects) == 7


def test_result_accounting(server):
    result = fetch_page(_plan(server, "burst", 2))
    assert result.total_duration > 0
    payload = sum(len(b) for b in result.objects.values()) + len(result.html)
    assert result.bytes_on_wire > payload


def test_transcript_round_trips(server):
    result = fetch_page(_plan(server, "burst", 2, record=True))
    assert len(result.transcript) == 2
    for req_bytes, resp_bytes in result.transcript:
        req = wire.decode_burst_request(req_bytes)
        resp = wire.decode_burst_response(resp_bytes, req)
        assert wire.encode_burst_response(resp) == resp_bytes


def test_html_error_is_fetch_error(server):
    with pytest.raises(FetchError, match="404"):
        fetch_page(FetchPlan("/nope.html", "burst", 1, "127.0.0.1", server.port))


def test_connection_refused():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(FetchError):
        fetch_page(FetchPlan("/index.html", "get", 1, "127.0.0.1", port))


def test_deadline_expiry(docroot):
    with running_server(ServerConfig(docroot, port=0, processing_delay=0.3)) as srv:
        with pytest.raises(FetchError):
            fetch_page(_plan(srv, "get", 1, timeout=0.5))


def test_protocol_error_from_server(docroot):
    # a server that answers BURST with garbage
    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen()
    port = listener.getsockname()[1]
    html = b'<img src="/a.jpg">'

    def fake():
        conn, _ = listener.accept()
        reader = wire.StreamReader(conn.recv)
        wire.read_head(reader)
        conn.sendall(wire.encode_response(wire.Response(200, html, "text/html")))
        wire.read_head(reader)
        conn.sendall(b"HTTP/1.1 200 OK\r\nBurst-Path: /wrong.jpg\r\nContent-Length: 0\r\n\r\n")
        conn.close()

    t = threading.Thread(target=fake)
    t.start()
    with pytest.raises(FetchError, match="expected part"):
        fetch_page(FetchPlan("/index.html", "burst", 1, "127.0.0.1", port))
    t.join()
    listener.close()


def test_cache_directory_layout(tmp_path):
    cache = ObjectCache(tmp_path / "c")
    cache.put("/img/a b.jpg", b"x")
    assert (tmp_path / "c" / "%2Fimg%2Fa%20b.jpg").read_bytes() == b"x"
    reloaded = ObjectCache(tmp_path / "c")
    assert reloaded.get("/img/a b.jpg") == b"x"
    reloaded.clear()
    assert len(ObjectCache(tmp_path / "c")) == 0


def test_plan_validation():
    with pytest.raises(ValueError):
        FetchPlan("/", "burst", 0)
    with pytest.raises(ValueError):
        FetchPlan("/", "post", 1)
    assert FetchPlan("/", "get").mode is Mode.GET
