"""Line-delimited JSON frames shared by both worker transports."""

import json
from typing import Optional

PROTOCOL_VERSION = 1


class LineChannel:
    """Blocking newline-framed JSON over a binary reader/writer pair."""

    def __init__(self, rfile, wfile):
        self._r = rfile
        self._w = wfile

    def read(self) -> Optional[dict]:
        """Next frame as a dict, or None on a closed stream.

        Raises json.JSONDecodeError for garbage lines; the serve loop turns
        that into an error frame rather than dying.
        """
        line = self._r.readline()
        if not line:
            return None
        msg = json.loads(line.decode("utf-8"))
        if not isinstance(msg, dict):
            raise json.JSONDecodeError("frame is not an object", line.decode("utf-8"), 0)
        return msg

    def write(self, msg: dict) -> None:
        self._w.write((json.dumps(msg) + "\n").encode("utf-8"))
        self._w.flush()


def hello() -> dict:
    return {"type": "hello", "protocol_version": PROTOCOL_VERSION}


def error_frame(message) -> dict:
    return {"type": "error", "error": str(message)}


def result_frame(response: dict) -> dict:
    return {"type": "result", "response": response}
