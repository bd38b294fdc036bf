import json
import threading

import pytest

from qaforge.gateway import ChatResponse, Gateway, MockProvider, MockScript


class SequenceProvider:
    """Returns canned texts in order, recording every request it sees."""

    def __init__(self, texts):
        self.texts = list(texts)
        self.requests = []
        self._lock = threading.Lock()

    def send(self, req):
        with self._lock:
            self.requests.append(req)
            idx = min(len(self.requests) - 1, len(self.texts) - 1)
        text = self.texts[idx]
        return ChatResponse(text=text, input_tokens=3, output_tokens=len(text.split()))


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            if raw.strip():
                out.append(json.loads(raw))
    return out


@pytest.fixture
def gw_factory():
    """Build a mock-backed gateway whose backoff sleeps are no-ops."""

    def build(script=None, provider=None, **kwargs):
        kwargs.setdefault("sleep", lambda s: None)
        if provider is None:
            provider = MockProvider(script if script is not None else MockScript())
        return Gateway(provider, **kwargs)

    return build
