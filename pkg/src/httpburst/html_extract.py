"""Find the inlined objects an HTML page references."""

from __future__ import annotations

from dataclasses import dataclass
from html.parser import HTMLParser
from urllib.parse import quote, unquote, urljoin, urlsplit

from .wire import InvalidPathError, check_path

# tag -> attribute holding the object URL
_SRC_TAGS = {"img": "src", "script": "src", "source": "src", "video": "src", "audio": "src"}
_LINK_RELS = {"stylesheet", "preload"}
_PATH_SAFE = "/:@!$&'()*+,;=-._~"


@dataclass(frozen=True)
class PageManifest:
    source_path: str
    objects: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)


def resolve_ref(raw: str, base_path: str, host: str | None = None) -> str | None:
    """Resolve an attribute value to a server-relative path, or None if it is excluded.

    Absolute and protocol-relative URLs are kept only when their host equals
    ``host``. Query strings and fragments are dropped.
    """
    raw = raw.strip()
    if not raw:
        return None
    parts = urlsplit(raw)
    if parts.scheme or parts.netloc:
        if parts.scheme not in ("", "http", "https"):
            return None
        if host is None or parts.netloc.lower() != host.lower():
            return None
    if not parts.path and not parts.netloc:
        # "?q" or "#frag" alone refer back to the page itself
        return None
    joined = urljoin("http://origin" + base_path, raw)
    path = urlsplit(joined).path or "/"
    path = quote(unquote(path), safe=_PATH_SAFE)
    try:
        return check_path(path)
    except InvalidPathError:
        return None


class _RefCollector(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.raw_refs: list[str] = []
        self._noscript = 0

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag == "noscript":
            self._noscript += 1
            return
        if self._noscript:
            return
        values = {k: v for k, v in attrs if v is not None}
        if tag in _SRC_TAGS:
            url = values.get(_SRC_TAGS[tag])
        elif tag == "link" and _LINK_RELS & set(values.get("rel", "").lower().split()):
            url = values.get("href")
        else:
            return
        if url is not None:
            self.raw_refs.append(url)

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag != "noscript":
            self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag: str) -> None:
        if tag == "noscript" and self._noscript:
            self._noscript -= 1


def extract_manifest(html: bytes | str, base_path: str = "/index.html", host: str | None = None) -> PageManifest:
    """Ordered, de-duplicated list of same-origin objects referenced by ``html``."""
    text = html.decode("utf-8", errors="replace") if isinstance(html, bytes) else html
    parser = _RefCollector()
    try:
        parser.feed(text)
        parser.close()
    except AssertionError:
        # html.parser asserts on some pathological markup; keep what we have
        pass
    seen: dict[str, None] = {}
    for raw in parser.raw_refs:
        path = resolve_ref(raw, base_path, host)
        if path is not None and path not in seen:
            seen[path] = None
    return PageManifest(base_path, tuple(seen))
