import csv
import io
import re
import signal
import socket
import subprocess
import sys
import time

import pytest

from httpburst import model
from httpburst.cli import main
from httpburst.wire import PROTOCOL_REVISION


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_no_args_is_usage_error(capsys):
    code, out, err = run(capsys)
    assert code == 1
    assert out == ""
    assert "usage" in err


def test_unknown_flag_rejected(capsys):
    code, out, err = run(capsys, "model", "--bogus")
    assert code == 1
    assert out == ""


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert f"revision {PROTOCOL_REVISION}" in capsys.readouterr().out


def test_model_golden(capsys):
    code, out, err = run(capsys, "model", "--payload", "1400", "--max-n", "150", "--c", "1,6")
    assert code == 0 and err == ""
    expected = model.sweep_csv(model.efficiency_sweep(1400, 150, model.OverheadParams(20, 20, 0), [1, 6]))
    assert out == expected
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 450
    last_burst1 = [r for r in rows if r["n"] == "150" and r["mode"] == "burst" and r["connections"] == "1"]
    assert float(last_burst1[0]["efficiency"]) > 0.999


def test_bench_model_only(capsys):
    code, out, _ = run(capsys, "bench", "--model-only")
    assert code == 0
    assert out.splitlines()[0] == "n,mode,connections,efficiency"
    assert len(out.splitlines()) == 451


def test_extract(capsys, docroot):
    code, out, err = run(capsys, "extract", str(docroot / "index.html"))
    assert code == 0 and err == ""
    assert out.splitlines() == [
        "/fonts/font.woff2",
        "/css/style.css",
        "/js/jquery.js",
        "/img/img1.jpg",
        "/img/img2.jpg",
        "/img/img3.jpg",
        "/img/img4.jpg",
    ]


def test_extract_missing_file(capsys, tmp_path):
    code, out, err = run(capsys, "extract", str(tmp_path / "nope.html"))
    assert code == 2 and out == "" and err


@pytest.mark.parametrize("mode", ["get", "burst"])
def test_fetch(capsys, server, mode, tmp_path):
    url = f"http://127.0.0.1:{server.port}/index.html"
    code, out, err = run(capsys, "fetch", url, "--mode", mode, "--connections", "2", "--timing", "--cache-dir", str(tmp_path / "c"))
    assert code == 0 and err == ""
    lines = out.splitlines()
    assert all(re.fullmatch(r"200 /\S+ \d+", line) for line in lines[:7])
    assert re.fullmatch(r"total_duration_ms=\d+\.\d{3}", lines[7])
    assert lines[8] == ("request_count=8" if mode == "get" else "request_count=3")
    assert re.fullmatch(r"bytes_on_wire=\d+", lines[9])
    assert len(list((tmp_path / "c").iterdir())) == 7

    code, out, _ = run(capsys, "fetch", url, "--mode", mode, "--timing", "--cache-dir", str(tmp_path / "c"))
    assert "request_count=1" in out and out.count(" cached") == 7


def test_fetch_refused(capsys):
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    code, out, err = run(capsys, "fetch", f"http://127.0.0.1:{port}/")
    assert code == 2 and out == "" and "fetch" in err


def test_fetch_bad_url(capsys):
    code, _, _ = run(capsys, "fetch", "ftp://x/")
    assert code == 1


def test_bench_small_run(capsys, tmp_path):
    out_file = tmp_path / "r.csv"
    code, out, err = run(
        capsys, "bench", "--n", "1,3", "--modes", "get:2,burst:2", "--runs", "2", "--delay-ms", "0", "--image-kb", "1", "--out", str(out_file)
    )
    assert code == 0 and out == ""
    rows = list(csv.DictReader(io.StringIO(out_file.read_text())))
    assert [(r["n"], r["mode"], r["connections"]) for r in rows] == [
        ("1", "burst", "2"),
        ("1", "get", "2"),
        ("3", "burst", "2"),
        ("3", "get", "2"),
    ]
    assert all(len(r["samples"].split(";")) == 2 for r in rows)
    assert "faster" in err


def test_bench_bad_modes(capsys):
    code, _, _ = run(capsys, "bench", "--modes", "get:0")
    assert code == 1


def test_serve_subprocess_and_sigterm(docroot):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "httpburst", "serve", "--root", str(docroot), "--port", str(port), "--delay-ms", "1"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    try:
        deadline = time.time() + 10
        while True:
            try:
                socket.create_connection(("127.0.0.1", port), timeout=1).close()
                break
            except OSError:
                if time.time() > deadline:
                    raise
                time.sleep(0.05)
        code = main(["fetch", f"http://127.0.0.1:{port}/index.html", "--mode", "burst", "--connections", "1"])
        assert code == 0
    finally:
        proc.send_signal(signal.SIGTERM)
        out, err = proc.communicate(timeout=10)
    assert proc.returncode == 0
    assert out == b""
    assert b"serving" in err


def test_serve_bad_root(capsys, tmp_path):
    code, _, err = run(capsys, "serve", "--root", str(tmp_path / "missing"), "--port", "0")
    assert code == 2 and "docroot" in err
