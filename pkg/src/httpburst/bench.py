"""GET versus BURST page-load benchmark on a loopback server."""

from __future__ import annotations

import csv
import io
import logging
import random
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .client import FetchError, FetchPlan, Mode, ObjectCache, fetch_page
from .server import ServerConfig, running_server

log = logging.getLogger(__name__)

KIB = 1024
FONT_SIZE = 44 * KIB
CSS_SIZE = 120 * KIB
JS_SIZE = 84 * KIB

FIXED_ASSETS = (
    ("/fonts/font.woff2", FONT_SIZE),
    ("/css/style.css", CSS_SIZE),
    ("/js/jquery.js", JS_SIZE),
)


@dataclass
class ExperimentConfig:
    image_counts: Sequence[int] = (1, 10, 25, 50, 100, 150)
    modes: Sequence[tuple[str, int]] = (("get", 6), ("burst", 1), ("burst", 6))
    runs_per_point: int = 10
    image_size: int = 30 * KIB
    processing_delay: float = 0.020
    font_size: int = FONT_SIZE
    css_size: int = CSS_SIZE
    js_size: int = JS_SIZE
    seed: int = 0
    warmup: bool = True
    # hand the client object sizes so BURST groups are balanced by bytes
    size_aware: bool = True

    def __post_init__(self) -> None:
        if self.runs_per_point < 2:
            raise ValueError("runs_per_point must be >= 2 for a standard deviation")
        if min(self.image_size, self.font_size, self.css_size, self.js_size) <= 0:
            raise ValueError("object sizes must be > 0")
        if any(n < 0 for n in self.image_counts):
            raise ValueError("image counts must be >= 0")
        for mode, c in self.modes:
            Mode(mode)
            if c < 1:
                raise ValueError("connections must be >= 1")


@dataclass
class RunStats:
    n_images: int
    mode: str
    connections: int
    samples: list[float] = field(default_factory=list)
    failed: bool = False

    @property
    def n_objects(self) -> int:
        return self.n_images + len(FIXED_ASSETS)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples) if self.samples else float("nan")

    @property
    def stddev(self) -> float:
        return statistics.pstdev(self.samples) if self.samples else float("nan")


def image_path(i: int) -> str:
    return f"/img/img{i + 1}.jpg"


def fixture_html(n_images: int) -> str:
    lines = [
        "<!DOCTYPE html>",
        "<html>",
        "<head>",
        '<meta charset="utf-8">',
        "<title>burst fixture</title>",
        '<link rel="preload" href="fonts/font.woff2" as="font" type="font/woff2" crossorigin>',
        '<link rel="stylesheet" href="css/style.css">',
        '<script src="js/jquery.js"></script>',
        "</head>",
        "<body>",
    ]
    lines += [f'<img src="{image_path(i)[1:]}" alt="image {i + 1}">' for i in range(n_images)]
    lines += ["</body>", "</html>", ""]
    return "\n".join(lines)


def fixture_sizes(config: ExperimentConfig, n_images: int) -> dict[str, int]:
    sizes = {
        "/fonts/font.woff2": config.font_size,
        "/css/style.css": config.css_size,
        "/js/jquery.js": config.js_size,
    }
    sizes.update({image_path(i): config.image_size for i in range(n_images)})
    return sizes


def generate_fixture(root: str | Path, n_images: int, config: ExperimentConfig | None = None) -> Path:
    """Write index.html plus font, CSS, JS and ``n_images`` images of seeded random bytes."""
    config = config or ExperimentConfig()
    root = Path(root)
    rng = random.Random(config.seed)
    root.mkdir(parents=True, exist_ok=True)
    (root / "index.html").write_text(fixture_html(n_images), encoding="utf-8")
    for path, size in fixture_sizes(config, n_images).items():
        target = root / path.lstrip("/")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(rng.randbytes(size))
    return root


def measure_point(
    port: int,
    mode: str,
    connections: int,
    runs: int,
    sizes: dict[str, int] | None = None,
    warmup: bool = True,
) -> list[float]:
    """Cold-cache page-load durations in seconds; an optional untimed warm-up goes first."""
    plan = FetchPlan("/index.html", Mode(mode), connections, "127.0.0.1", port, sizes=sizes)
    samples = []
    for i in range(runs + (1 if warmup else 0)):
        result = fetch_page(plan, ObjectCache())
        if warmup and i == 0:
            continue
        samples.append(result.total_duration)
    return samples


def run_experiment(config: ExperimentConfig) -> list[RunStats]:
    """Run every (N, mode, C) point sequentially against a fresh fixture per N."""
    rows: list[RunStats] = []
    for n in sorted(set(config.image_counts)):
        with tempfile.TemporaryDirectory(prefix="burst-fixture-") as tmp:
            generate_fixture(tmp, n, config)
            sizes = fixture_sizes(config, n) if config.size_aware else None
            server_config = ServerConfig(Path(tmp), port=0, processing_delay=config.processing_delay)
            with running_server(server_config) as server:
                for mode, c in sorted(config.modes):
                    stats = RunStats(n, mode, c)
                    try:
                        stats.samples = measure_point(
                            server.port, mode, c, config.runs_per_point, sizes, config.warmup
                        )
                    except FetchError as exc:
                        log.error("N=%d %s@%d failed: %s", n, mode, c, exc)
                        stats.failed = True
                        stats.samples = []
                    rows.append(stats)
    rows.sort(key=lambda r: (r.n_images, r.mode, r.connections))
    return rows


def summarize(stats: Sequence[RunStats]) -> str:
    """CSV with ``n,mode,connections,mean_ms,stddev_ms,samples``; samples are ';'-joined ms."""
    if not stats:
        raise ValueError("no stats to summarize")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "mode", "connections", "mean_ms", "stddev_ms", "samples"])
    for s in sorted(stats, key=lambda r: (r.n_images, r.mode, r.connections)):
        ms = [x * 1000.0 for x in s.samples]
        mean = repr(statistics.fmean(ms)) if ms else "nan"
        std = repr(statistics.pstdev(ms)) if ms else "nan"
        writer.writerow([s.n_images, s.mode, s.connections, mean, std, ";".join(repr(x) for x in ms)])
    return buf.getvalue()


def improvement(get_mean: float, burst_mean: float) -> float:
    """Relative reduction of page-load time, e.g. (2.5 - 1.2) / 2.5 ≈ 0.52."""
    return (get_mean - burst_mean) / get_mean
