"""Local HTTP service that assigns HITs, records responses, reports progress.

Design notes:
- Offers are non-reserving; eligibility is evaluated per GET and the HIT
  with the lowest counted-response total (ties by hit id) is served.
- Every state mutation goes through one lock; a response is appended to the
  JSONL log and fsynced before the client sees an ack, so the on-disk log
  is always a prefix-complete record and replaying it reconstructs the
  in-memory state exactly (kill -9 safe).
- Served task payloads come from Task.public_doc(), which never carries z.
- The day bucket for the describability rate limit is the UTC calendar date
  of server receipt; tests inject `now_fn` to simulate day rollover.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .corpus import ImageManifest
from .report import build_score_report, render_json
from .stats import Response, ResponseFolder
from .tasks import TaskSet

_IMAGE_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg",
                ".gif": "image/gif", ".webp": "image/webp"}
_UI_TYPES = {".html": "text/html; charset=utf-8", ".js": "text/javascript",
             ".css": "text/css", ".map": "application/json",
             ".svg": "image/svg+xml", ".png": "image/png", ".ico": "image/x-icon"}


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _timestamp(moment: datetime) -> str:
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class Ack:
    status: int
    body: dict


class StudyApp:
    """All study state plus the serialized writer; handler-agnostic."""

    def __init__(self, taskset: TaskSet, log_path: str | Path,
                 manifest: ImageManifest | None = None,
                 ui_dir: str | Path | None = None,
                 now_fn=None):
        self.taskset = taskset
        self.manifest = manifest
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self.now_fn = now_fn or _utc_now
        self.lock = threading.Lock()
        self.folder = ResponseFolder(taskset)
        self.responses: list[Response] = []  # log order, counted and flagged
        self.log_path = Path(log_path)
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._replay()
        self._log = self.log_path.open("ab")
        if self._fresh_log:
            self._append({"type": "meta", "schema": "viscoh-responselog-v1",
                          "study_id": taskset.study_id})

    def _replay(self) -> None:
        self._fresh_log = True
        if not self.log_path.exists():
            return
        with self.log_path.open("r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        for lineno, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                if lineno == len(lines) - 1:
                    # torn tail write from a crash before fsync; the response
                    # was never acknowledged, so dropping it is consistent
                    break
                raise
            if doc.get("type") == "meta":
                self._fresh_log = False
                if doc.get("study_id") != self.taskset.study_id:
                    raise ValueError(
                        f"log belongs to study {doc.get('study_id')!r}, "
                        f"not {self.taskset.study_id!r}")
                continue
            response = Response.from_doc(doc)
            self.folder.add(response)
            self.responses.append(response)

    def _append(self, doc: dict) -> None:
        self._log.write((json.dumps(doc, sort_keys=True) + "\n").encode("utf-8"))
        self._log.flush()
        os.fsync(self._log.fileno())

    def close(self) -> None:
        self._log.close()

    # -- endpoints ------------------------------------------------------------

    def next_task(self, worker: str) -> dict | None:
        with self.lock:
            best = None
            today = _timestamp(self.now_fn())[:10]
            for task in sorted(self.taskset.tasks, key=lambda t: t.hit_id):
                if (task.hit_id, worker) in self.folder.seen:
                    continue
                if task.mode == "rating":
                    count = len(self.folder.ratings.get(task.hit_id, {}))
                else:
                    count = len(self.folder.per_hit[task.hit_id])
                if count >= self.folder.cap:
                    continue
                if (task.mode == "describability"
                        and self.folder.rate_limit is not None):
                    key = (worker, task.class_id, today)
                    if self.folder.rate_counts.get(key, 0) >= self.folder.rate_limit:
                        continue
                if best is None or count < best[0]:
                    best = (count, task)
            if best is None:
                return None
            return best[1].public_doc()

    def record(self, doc: dict) -> Ack:
        hit_id = doc.get("hit_id")
        worker = doc.get("worker")
        if not hit_id or not worker:
            return Ack(400, {"error": "hit_id and worker are required"})
        with self.lock:
            task = self.folder.tasks.get(hit_id)
            if task is None:
                return Ack(404, {"error": f"unknown hit {hit_id!r}"})
            response = Response(
                hit_id=hit_id,
                worker_id=worker,
                chosen_query=doc.get("chosen_query"),
                received_at=_timestamp(self.now_fn()),
                likert=doc.get("likert"),
                at_least_one=doc.get("at_least_one"),
            )
            try:
                self.folder.validate(response)
            except ValueError as exc:
                return Ack(422, {"error": str(exc)})
            if (hit_id, worker) in self.folder.seen:
                # idempotent: acknowledged, not re-recorded
                return Ack(200, {"status": "duplicate"})
            disposition = self.folder.add(response)
            record = response.to_doc()
            record["counted"] = disposition.counted
            if disposition.flag:
                record["flag"] = disposition.flag
            self._append(record)
            self.responses.append(response)
            body = {"status": "recorded", "counted": disposition.counted}
            if disposition.flag:
                body["flag"] = disposition.flag
            return Ack(200, body)

    def progress(self) -> dict:
        with self.lock:
            per_class: dict[int, dict] = {}
            for task in self.taskset.tasks:
                entry = per_class.setdefault(task.class_id, {"answered": 0, "total": 0})
                entry["total"] += self.folder.cap
                if task.mode == "rating":
                    entry["answered"] += len(self.folder.ratings.get(task.hit_id, {}))
                else:
                    entry["answered"] += len(self.folder.per_hit[task.hit_id])
            return {
                "study_id": self.taskset.study_id,
                "classes": {str(c): per_class[c] for c in sorted(per_class)},
                "answered": sum(e["answered"] for e in per_class.values()),
                "total": sum(e["total"] for e in per_class.values()),
            }

    def report_bytes(self) -> bytes:
        with self.lock:
            responses = list(self.responses)
        return render_json(build_score_report(self.taskset, responses))

    def image_bytes(self, image_id: str) -> tuple[bytes, str] | None:
        if self.manifest is None:
            return None
        path = self.manifest.resolve(image_id)
        if path is None or not path.is_file():
            return None
        content_type = _IMAGE_TYPES.get(path.suffix.lower(), "application/octet-stream")
        return path.read_bytes(), content_type

    def ui_bytes(self, raw_path: str) -> tuple[bytes, str] | None:
        if self.ui_dir is None:
            return None
        rel = raw_path.lstrip("/") or "index.html"
        candidate = (self.ui_dir / rel).resolve()
        if not candidate.is_relative_to(self.ui_dir) or not candidate.is_file():
            return None
        content_type = _UI_TYPES.get(candidate.suffix.lower(), "application/octet-stream")
        return candidate.read_bytes(), content_type


class _Handler(BaseHTTPRequestHandler):
    app: StudyApp  # set by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, doc: dict) -> None:
        self._send(status, (json.dumps(doc, sort_keys=True) + "\n").encode("utf-8"),
                   "application/json")

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/api/task":
            params = parse_qs(url.query)
            worker = params.get("worker", [""])[0]
            if not worker:
                self._send_json(400, {"error": "missing worker parameter"})
                return
            task = self.app.next_task(worker)
            if task is None:
                self.send_response(204)
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            self._send_json(200, task)
        elif url.path == "/api/progress":
            self._send_json(200, self.app.progress())
        elif url.path == "/api/report":
            self._send(200, self.app.report_bytes(), "application/json")
        elif url.path.startswith("/img/"):
            image_id = url.path[len("/img/"):]
            found = self.app.image_bytes(image_id)
            if found is None:
                self._send_json(404, {"error": f"unknown image {image_id!r}"})
                return
            body, content_type = found
            self._send(200, body, content_type)
        else:
            found = self.app.ui_bytes(url.path)
            if found is None:
                self._send_json(404, {"error": "not found"})
                return
            body, content_type = found
            self._send(200, body, content_type)

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/response":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        try:
            doc = json.loads(raw.decode("utf-8")) if raw else {}
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._send_json(400, {"error": "invalid JSON body"})
            return
        ack = self.app.record(doc)
        self._send_json(ack.status, ack.body)


def make_server(app: StudyApp, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"app": app})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(app: StudyApp, host: str, port: int) -> None:
    server = make_server(app, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        app.close()
