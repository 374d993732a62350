"""Frame constructors and line framing over in-memory streams."""

import io
import json

import pytest

from trainer_bridge.protocol import (PROTOCOL_VERSION, LineChannel,
                                     error_frame, hello, result_frame)


def channel_over(data: bytes):
    return LineChannel(io.BytesIO(data), io.BytesIO())


def test_hello_and_frames():
    assert hello() == {"type": "hello", "protocol_version": PROTOCOL_VERSION}
    assert error_frame(ValueError("boom")) == {"type": "error", "error": "boom"}
    assert result_frame({"accuracy": 0.5})["response"] == {"accuracy": 0.5}


def test_read_returns_none_on_eof():
    assert channel_over(b"").read() is None


def test_round_trip_through_buffer():
    out = io.BytesIO()
    LineChannel(io.BytesIO(), out).write({"type": "hello", "protocol_version": 1})
    chan = channel_over(out.getvalue())
    assert chan.read() == {"type": "hello", "protocol_version": 1}


def test_garbage_line_raises_decode_error():
    with pytest.raises(json.JSONDecodeError):
        channel_over(b"not json\n").read()
    with pytest.raises(json.JSONDecodeError):
        channel_over(b"[1, 2]\n").read()  # frames must be objects
