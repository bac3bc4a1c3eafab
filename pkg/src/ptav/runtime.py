"""Tracking and verifying loops, their messages, and the two schedulers.

The tracking loop owns the tracker (models + snapshot archive); the verifying
loop owns the verifier (template pool + embedder).  They talk only through
two FIFO queues carrying :class:`VerifyRequest` and :class:`Feedback`.
Every message carries the tracker's epoch, which increments on each
trace-back, so results computed for an abandoned timeline are discarded.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .imgproc import BoundingBox
from .tracker import ArchiveUnderflowError, Tracker, TrackerConfig
from .verifier import Verifier, VerifierConfig

MODES = ("lockstep", "async")


@dataclass(frozen=True)
class VerifyRequest:
    frame_index: int
    box: BoundingBox
    frame: np.ndarray = field(repr=False, compare=False)
    epoch: int = 0


@dataclass(frozen=True)
class Feedback:
    frame_index: int
    passed: bool
    corrected_box: BoundingBox | None = None
    new_interval: int | None = None
    epoch: int = 0
    score: float = float("nan")


@dataclass(frozen=True)
class Dropped:
    """Notice that a stale request was discarded without verification."""

    frame_index: int
    epoch: int


@dataclass
class RuntimeConfig:
    n_int: int = 10
    mode: str = "lockstep"
    update_on_pass: bool = True
    archive_capacity: int | None = None  # default 2 * n_int + 5
    verify_delay: float = 0.0  # seconds added to every verification
    verifier: str = "hogcolor"  # or "none"

    def __post_init__(self):
        if self.n_int < 1:
            raise ValueError("n_int must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.verifier not in ("hogcolor", "none", "external"):
            raise ValueError("verifier must be hogcolor, none or external")
        if self.archive_capacity is not None and self.archive_capacity < self.n_int + 1:
            raise ValueError("archive_capacity must be >= n_int + 1")

    @property
    def delta(self) -> int:
        return self.archive_capacity or 2 * self.n_int + 5


@dataclass(frozen=True)
class TraceEvent:
    epoch: int
    frame: int
    event: str
    fields: tuple = ()

    def line(self) -> str:
        parts = [str(self.epoch), str(self.frame), self.event]
        parts += [f"{k}={_fmt(v)}" for k, v in self.fields]
        return " ".join(parts)


def _fmt(v) -> str:
    if isinstance(v, BoundingBox):
        return ",".join(repr(float(c)) for c in v.as_tuple())
    if isinstance(v, float):
        return repr(v)
    return str(v)


class TraceLog:
    """Append-only event log shared by both loops."""

    def __init__(self):
        self.events: list[TraceEvent] = []
        self._lock = threading.Lock()

    def add(self, epoch, frame, event, **fields):
        with self._lock:
            self.events.append(TraceEvent(epoch, frame, event, tuple(fields.items())))

    def __len__(self):
        return len(self.events)

    def of(self, event) -> list[TraceEvent]:
        return [e for e in self.events if e.event == event]

    def text(self) -> str:
        return "".join(e.line() + "\n" for e in self.events)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.text())


@dataclass
class TrackRun:
    boxes: list
    trace: TraceLog
    wall_time: float
    n_requests: int = 0
    n_rollbacks: int = 0
    final_epoch: int = 0
    aborted: bool = False
    error: str | None = None

    @property
    def fps(self) -> float:
        n = sum(b is not None for b in self.boxes)
        return n / self.wall_time if self.wall_time > 0 else float("inf")


class VerifyingLoop:
    """Verification policy: verify, admit, detect on failure, adapt interval and region."""

    def __init__(self, verifier: Verifier, n_int_init=10):
        self.verifier = verifier
        self.config = verifier.config
        self.n_int_init = n_int_init
        self.gamma = self.config.gamma_init

    def init(self, frame, box):
        self.verifier.init(frame, box)

    def handle(self, req: VerifyRequest, trace: TraceLog) -> Feedback:
        v = self.verifier.verify(req.frame, req.box)
        if v.passed:
            if self.verifier.maybe_admit(v):
                pool = self.verifier.pool
                trace.add(req.epoch, req.frame_index, "TemplateAdmitted",
                          score=v.score, staged=len(pool.staging), pool=len(pool.dynamic),
                          clusters=pool.n_clusters)
            return Feedback(req.frame_index, True, epoch=req.epoch, score=v.score)
        det = self.verifier.detect(req.frame, req.box, self.gamma)
        if det.reliable:
            trace.add(req.epoch, req.frame_index, "DetectionReliable",
                      score=det.score, gamma=self.gamma, box=det.best, candidates=det.n_candidates)
            self.gamma = self.config.gamma_init
            return Feedback(req.frame_index, False, det.best, self.n_int_init, req.epoch, v.score)
        trace.add(req.epoch, req.frame_index, "DetectionUnreliable",
                  score=det.score, gamma=self.gamma, candidates=det.n_candidates)
        self.gamma = min(self.gamma * self.config.gamma_step, self.config.gamma_max)
        return Feedback(req.frame_index, False, None, 1, req.epoch, v.score)


class VerifierSide:
    """Runs a handler on requests: stale-epoch filtering, artificial delay, logging."""

    def __init__(self, handler, trace: TraceLog, delay=0.0):
        self.handler = handler
        self.trace = trace
        self.delay = delay
        self.min_epoch = 0

    def process(self, req: VerifyRequest):
        if req.epoch < self.min_epoch:
            self.trace.add(req.epoch, req.frame_index, "RequestDropped")
            return Dropped(req.frame_index, req.epoch)
        if self.delay > 0:
            time.sleep(self.delay)
        fb = self.handler.handle(req, self.trace)
        if fb.passed:
            self.trace.add(req.epoch, req.frame_index, "VerifyPassed", score=fb.score)
        else:
            self.trace.add(req.epoch, req.frame_index, "VerifyFailed", score=fb.score,
                           corrected=fb.corrected_box is not None)
        if fb.corrected_box is not None:
            # the tracker will move to a new epoch; older requests are moot
            self.min_epoch = req.epoch + 1
        return fb


class TrackingLoop:
    """Tracking side: per-frame tracking, request scheduling and trace-back."""

    def __init__(self, tracker: Tracker, sequence, init_box: BoundingBox, config: RuntimeConfig,
                 trace: TraceLog, verify=True):
        self.tracker = tracker
        self.seq = sequence
        self.config = config
        self.trace = trace
        self.verify = verify
        self.n = len(sequence)
        self.boxes: list[BoundingBox | None] = [None] * self.n
        self.boxes[0] = init_box
        self.current = 1
        self.epoch = 0
        self.n_int = config.n_int
        self.since_request = 0
        self.pending = 0
        self.n_requests = 0
        self.n_rollbacks = 0
        self._frames = {}

    def frame(self, i):
        f = self._frames.get(i)
        if f is None:
            f = self.seq[i]
            f.setflags(write=False)
            self._frames = {k: v for k, v in self._frames.items() if k > i - self.config.delta - 2}
            self._frames[i] = f
        return f

    @property
    def done(self) -> bool:
        return self.current >= self.n and self.pending == 0

    def on_message(self, msg):
        self.pending -= 1
        if isinstance(msg, Dropped):
            return
        if msg.epoch != self.epoch:
            self.trace.add(msg.epoch, msg.frame_index, "FeedbackStale")
            return
        if msg.new_interval is not None and msg.new_interval != self.n_int:
            self.trace.add(self.epoch, msg.frame_index, "IntervalChanged", old=self.n_int, new=msg.new_interval)
            self.n_int = msg.new_interval
        if msg.passed:
            if not self.config.update_on_pass:
                k = msg.frame_index
                self.tracker.update_models(self.frame(k), self.boxes[k])
            return
        if msg.corrected_box is not None:
            self._trace_back(msg.frame_index, msg.corrected_box)

    def _trace_back(self, k, box):
        frame = self.frame(k)
        degraded = 0
        try:
            self.tracker.rollback(k, box)
            self.tracker.restart(frame, k, box)
        except ArchiveUnderflowError:
            degraded = 1
            self.tracker.reinitialize(frame, k, box)
        self.boxes[k] = box
        self.epoch += 1
        self.n_rollbacks += 1
        self.trace.add(self.epoch, k, "RolledBack", target=k, resume=k + 1, abandoned=self.current - 1,
                       box=box, degraded=degraded)
        self.current = k + 1
        self.since_request = 0

    def step(self) -> VerifyRequest | None:
        """Track ``current`` and return a request when verification is due."""
        i = self.current
        frame = self.frame(i)
        box = self.tracker.track(frame, i, update=self.config.update_on_pass)
        self.boxes[i] = box
        self.trace.add(self.epoch, i, "FrameTracked", box=box)
        self.current = i + 1
        self.since_request += 1
        if self.verify and self.since_request >= self.n_int:
            self.since_request = 0
            self.pending += 1
            self.n_requests += 1
            self.trace.add(self.epoch, i, "RequestSent", interval=self.n_int)
            return VerifyRequest(i, box, frame, self.epoch)
        return None


def build_tracker(tracker_config: TrackerConfig | None, runtime_config: RuntimeConfig) -> Tracker:
    cfg = tracker_config or TrackerConfig()
    if cfg.archive_capacity != runtime_config.delta:
        cfg = TrackerConfig(**{**cfg.__dict__, "archive_capacity": runtime_config.delta})
    return Tracker(cfg)


class Lockstep:
    """Deterministic schedule: one tracked frame, then any emitted request runs to completion."""

    def __init__(self, tloop: TrackingLoop, vside: VerifierSide | None):
        self.tloop = tloop
        self.vside = vside
        self.inbox: list = []

    def step(self) -> bool:
        t = self.tloop
        while self.inbox:
            t.on_message(self.inbox.pop(0))
        if t.current >= t.n:
            return False
        req = t.step()
        if req is not None:
            self.inbox.append(self.vside.process(req))
        return True


def run(sequence, init_box: BoundingBox, runtime_config: RuntimeConfig | None = None,
        tracker_config: TrackerConfig | None = None, verifier_config: VerifierConfig | None = None,
        handler=None, embedder=None) -> TrackRun:
    """Track a whole sequence with the configured scheduler.

    ``handler`` replaces the default verifying loop; it needs ``init(frame, box)``
    and ``handle(request, trace) -> Feedback``.
    """
    rc = runtime_config or RuntimeConfig()
    trace = TraceLog()
    n = len(sequence)
    if n == 0:
        return TrackRun([], trace, 0.0)
    tracker = build_tracker(tracker_config, rc)
    frame0 = sequence[0]
    tracker.init(frame0, init_box)
    use_verifier = rc.verifier != "none" or handler is not None
    if use_verifier and handler is None:
        handler = VerifyingLoop(Verifier(verifier_config, embedder), rc.n_int)
    if use_verifier:
        handler.init(frame0, init_box)
    tloop = TrackingLoop(tracker, sequence, init_box, rc, trace, verify=use_verifier)
    vside = VerifierSide(handler, trace, rc.verify_delay) if use_verifier else None

    t0 = time.perf_counter()
    try:
        if rc.mode == "lockstep" or not use_verifier:
            sched = Lockstep(tloop, vside)
            while sched.step():
                pass
        else:
            _run_async(tloop, vside)
    except Exception as exc:  # unreadable frame or similar: keep partial results
        wall = time.perf_counter() - t0
        return TrackRun(tloop.boxes, trace, wall, tloop.n_requests, tloop.n_rollbacks,
                        tloop.epoch, aborted=True, error=str(exc))
    wall = time.perf_counter() - t0
    return TrackRun(tloop.boxes, trace, wall, tloop.n_requests, tloop.n_rollbacks, tloop.epoch)


_STOP = object()


def _run_async(tloop: TrackingLoop, vside: VerifierSide):
    requests: queue.Queue = queue.Queue()
    feedback: queue.Queue = queue.Queue()
    failure = []

    def verifying():
        while True:
            req = requests.get()
            if req is _STOP:
                return
            try:
                feedback.put(vside.process(req))
            except Exception as exc:  # surface in the tracking thread
                failure.append(exc)
                feedback.put(Dropped(req.frame_index, req.epoch))

    worker = threading.Thread(target=verifying, name="ptav-verifier", daemon=True)
    worker.start()
    try:
        while not tloop.done:
            if failure:
                raise failure[0]
            # block only when every frame is tracked and verdicts are outstanding
            block = tloop.current >= tloop.n
            while True:
                try:
                    msg = feedback.get(block=block)
                except queue.Empty:
                    break
                tloop.on_message(msg)
                block = False
            if tloop.current < tloop.n:
                req = tloop.step()
                if req is not None:
                    requests.put(req)
        if failure:
            raise failure[0]
    finally:
        requests.put(_STOP)
        worker.join()

