"""HTTP annotation service backing the annotator UI.

Endpoints:
  GET  /api/tasks/next   -> {image_id, image_url, remaining} (null id when done)
  GET  /api/progress     -> {done, total}
  GET  /images/{id}      -> PNG bytes
  POST /api/annotations  -> 201 on append; 400 with reason on bad payloads

Concurrency: requests run on the ThreadingHTTPServer's thread pool; a
single lock serializes queue state and file appends, so concurrent
submissions land as whole lines. /api/tasks/next leases the returned
image for a window so two annotators never work the same image at once.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

from .annotate import (AnnotationRecord, SchemaError, append_record,
                       parse_annotations, record_from_obj, utc_now_iso)

logger = logging.getLogger(__name__)

LEASE_SECONDS = 120.0


class SubmitError(ValueError):
    """Client-side fault in a submitted annotation (maps to HTTP 400)."""


class AnnotationService:
    """Queue + store logic, independent of the HTTP layer."""

    def __init__(self, images_dir: Path | str, out_path: Path | str,
                 lease_seconds: float = LEASE_SECONDS, clock=time.monotonic):
        self.images = {p.stem: p for p in sorted(Path(images_dir).glob("*.png"))}
        if not self.images:
            raise ValueError(f"no PNG images in {images_dir}")
        self.out_path = Path(out_path)
        self.lease_seconds = lease_seconds
        self.clock = clock
        self._lock = threading.Lock()
        self._leases: dict[str, float] = {}
        self.done: set[str] = set()
        if self.out_path.exists():
            for rec in parse_annotations(self.out_path):
                if rec.image_id in self.images:
                    self.done.add(rec.image_id)

    def _expire_leases(self, now: float) -> None:
        for image_id, expiry in list(self._leases.items()):
            if expiry <= now:
                del self._leases[image_id]

    def next_task(self) -> dict:
        with self._lock:
            now = self.clock()
            self._expire_leases(now)
            remaining = len(self.images) - len(self.done)
            for image_id in sorted(self.images):
                if image_id in self.done or image_id in self._leases:
                    continue
                self._leases[image_id] = now + self.lease_seconds
                return {"image_id": image_id,
                        "image_url": f"/images/{image_id}",
                        "remaining": remaining}
            return {"image_id": None, "image_url": None,
                    "remaining": remaining}

    def progress(self) -> dict:
        with self._lock:
            return {"done": len(self.done), "total": len(self.images)}

    def submit(self, payload) -> AnnotationRecord:
        """Validate and durably append one annotation; raises SubmitError."""
        if isinstance(payload, dict) and "created_at" not in payload:
            payload = {**payload, "created_at": utc_now_iso()}
        try:
            record = record_from_obj(payload, where="annotation")
        except SchemaError as e:
            raise SubmitError(str(e)) from None
        if record.image_id not in self.images:
            raise SubmitError(f"unknown image_id {record.image_id!r}")
        with self._lock:
            append_record(self.out_path, record)
            self.done.add(record.image_id)
            self._leases.pop(record.image_id, None)
        return record

    def image_bytes(self, image_id: str) -> bytes | None:
        path = self.images.get(image_id)
        return path.read_bytes() if path else None


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService  # injected by make_server

    protocol_version = "HTTP/1.1"

    def _send(self, status: int, body: bytes,
              content_type: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode())

    def do_OPTIONS(self):  # CORS preflight for the browser UI
        self._send(204, b"")

    def do_GET(self):
        path = urlsplit(self.path).path
        if path == "/api/tasks/next":
            self._send_json(200, self.service.next_task())
        elif path == "/api/progress":
            self._send_json(200, self.service.progress())
        elif path.startswith("/images/"):
            image_id = path[len("/images/"):]
            data = self.service.image_bytes(image_id)
            if data is None:
                self._send_json(404, {"error": f"unknown image {image_id!r}"})
            else:
                self._send(200, data, content_type="image/png")
        else:
            self._send_json(404, {"error": f"no route {path}"})

    def do_POST(self):
        path = urlsplit(self.path).path
        if path != "/api/annotations":
            self._send_json(404, {"error": f"no route {path}"})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except json.JSONDecodeError as e:
            self._send_json(400, {"error": f"malformed JSON body: {e}"})
            return
        try:
            record = self.service.submit(payload)
        except SubmitError as e:
            self._send_json(400, {"error": str(e)})
            return
        except OSError as e:
            self._send_json(500, {"error": f"write failed: {e}"})
            return
        self._send_json(201, {"status": "created",
                              "image_id": record.image_id})

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)


def make_server(images_dir: Path | str, out_path: Path | str, port: int,
                lease_seconds: float = LEASE_SECONDS,
                host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Bound, ready-to-serve server; port 0 picks an ephemeral port."""
    service = AnnotationService(images_dir, out_path, lease_seconds)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    httpd = ThreadingHTTPServer((host, port), handler)
    httpd.service = service  # convenient test access
    return httpd


def serve_annotation_api(images_dir: Path | str, out_path: Path | str,
                         port: int) -> None:
    """Run the service in the foreground until interrupted."""
    httpd = make_server(images_dir, out_path, port)
    host, bound_port = httpd.server_address[:2]
    logger.info("annotation service on http://%s:%s", host, bound_port)
    print(f"serving annotations on http://{host}:{bound_port}", flush=True)
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()
