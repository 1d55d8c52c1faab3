"""Smart-home device API client available to every function as `import home`."""
import json
import os
import urllib.error
import urllib.request

BASE_URL = os.environ.get("HOME_API_URL", "http://127.0.0.1:8700").rstrip("/")
_opener = urllib.request.build_opener(urllib.request.ProxyHandler({}))


class HomeError(Exception):
    """Raised when the device API rejects a request."""


def _request(method, path, body=None):
    data = None if body is None else json.dumps(body).encode("utf-8")
    req = urllib.request.Request(BASE_URL + path, data=data, method=method)
    req.add_header("Content-Type", "application/json")
    try:
        with _opener.open(req, timeout=10) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as e:
        detail = e.read().decode("utf-8", errors="replace")
        try:
            detail = json.loads(detail).get("detail", detail)
        except ValueError:
            pass
        raise HomeError("%s %s failed: %s" % (method, path, detail)) from None
    return json.loads(raw) if raw else None


def devices():
    """All devices: {device_id: {"kind": ..., "attributes": {...}}}."""
    return _request("GET", "/devices")


def state(device_id):
    """Attribute map of one device."""
    return _request("GET", "/devices/%s" % device_id)["attributes"]


def get(device_id, attribute):
    return _request("GET", "/devices/%s/%s" % (device_id, attribute))["value"]


def set(device_id, attribute, value):
    return _request("PUT", "/devices/%s/%s" % (device_id, attribute), {"value": value})["attributes"]


def now():
    """Current virtual clock tick (one tick is one minute)."""
    return _request("GET", "/clock")["tick"]
