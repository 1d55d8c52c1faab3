"""HTTP shim wrapping a user handler. Injected into every python3 bundle.

Environment:
  FORGE_HANDLER   path of the handler module
  FORGE_ENTRY     name of the handler function (default "fn")
  FORGE_DEPS      optional directory with installed dependencies

Prints "FORGE_LISTENING <port>" once the server socket is bound.
"""
import importlib.util
import json
import os
import sys
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

handler_path = os.path.abspath(os.environ["FORGE_HANDLER"])
entry = os.environ.get("FORGE_ENTRY", "fn")
sys.path.insert(0, os.path.dirname(handler_path))
deps = os.environ.get("FORGE_DEPS")
if deps:
    sys.path.insert(0, deps)

try:
    spec = importlib.util.spec_from_file_location("handler", handler_path)
    module = importlib.util.module_from_spec(spec)
    sys.modules["handler"] = module
    spec.loader.exec_module(module)
except BaseException:
    traceback.print_exc()
    sys.stderr.flush()
    sys.exit(3)

handler = getattr(module, entry, None)
if not callable(handler):
    sys.stderr.write("AttributeError: handler module has no callable '%s'\n" % entry)
    sys.exit(4)


def encode(result):
    if result is None:
        return b""
    if isinstance(result, bytes):
        return result
    if isinstance(result, str):
        return result.encode("utf-8")
    try:
        return json.dumps(result, default=str).encode("utf-8")
    except Exception:
        return str(result).encode("utf-8")


class Shim(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _send(self, status, body, guest_error=False):
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        if guest_error:
            self.send_header("X-Guest-Error", "1")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, b"ok")
        else:
            self._send(404, b"not found")

    def do_POST(self):
        if self.path != "/invoke":
            self._send(404, b"not found")
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            result = handler(raw.decode("utf-8", errors="replace"))
            body = encode(result)
        except BaseException:
            tb = traceback.format_exc()
            sys.stderr.write(tb)
            sys.stderr.flush()
            self._send(500, tb.encode("utf-8"), guest_error=True)
            return
        self._send(200, body)

    def log_message(self, *args):
        pass


server = ThreadingHTTPServer(("127.0.0.1", 0), Shim)
server.daemon_threads = True
print("FORGE_LISTENING %d" % server.server_address[1], flush=True)
try:
    server.serve_forever()
except KeyboardInterrupt:
    pass
