"""Scripted synthetic sequences with exact ground truth.

Script text is flat ``key = value`` lines plus ``event:`` lines::

    width = 320
    height = 240
    frames = 150
    target = 100,100,24,24
    texture_seed = 3
    event: translate start=0 end=150 vx=0.5 vy=0.25
    event: teleport at=60 dx=40 dy=0
    event: occlude start=80 end=90 box=90,90,40,40 opacity=0.5

Event spans are half-open ``[start, end)``; ``teleport`` takes ``at=``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..imgproc import BoundingBox, crop_resize, frame_box
from .io import Sequence

EVENT_PARAMS = {
    "translate": ("vx", "vy"),
    "scale": ("rate",),
    "occlude": ("box", "opacity"),
    "illuminate": ("gain",),
    "teleport": ("dx", "dy"),
    "clutter": ("seed",),
}

TARGET_PALETTE = np.array(
    [[0.95, 0.1, 0.1], [0.95, 0.9, 0.1], [0.1, 0.2, 0.95], [0.98, 0.98, 0.98], [0.05, 0.05, 0.05]]
)
CLUTTER_PALETTE = np.array([[0.2, 0.75, 0.25], [0.55, 0.3, 0.6], [0.9, 0.55, 0.15], [0.3, 0.7, 0.75]])


class ScriptError(ValueError):
    pass


@dataclass
class Event:
    kind: str
    start: int
    end: int
    params: dict

    def active(self, t) -> bool:
        return self.start <= t < self.end


@dataclass
class SynthScript:
    width: int = 320
    height: int = 240
    frames: int = 100
    target: tuple = (100.0, 100.0, 24.0, 24.0)
    texture_seed: int = 0
    background_seed: int = 0
    texture_blocks: int = 6
    noise: float = 0.0
    allow_out_of_view: bool = False
    name: str = "synthetic"
    events: list = field(default_factory=list)

    def validate(self):
        if self.width < 8 or self.height < 8 or self.frames < 1:
            raise ScriptError("canvas must be at least 8x8 with >= 1 frame")
        try:
            BoundingBox(*self.target)
        except ValueError as exc:
            raise ScriptError(str(exc)) from None
        by_kind: dict[str, list[Event]] = {}
        for ev in self.events:
            if ev.kind not in EVENT_PARAMS:
                raise ScriptError(f"unknown event {ev.kind!r}")
            missing = [p for p in EVENT_PARAMS[ev.kind] if p not in ev.params]
            if missing:
                raise ScriptError(f"event {ev.kind} missing {missing}")
            if ev.end <= ev.start:
                raise ScriptError(f"event {ev.kind} has an empty span")
            by_kind.setdefault(ev.kind, []).append(ev)
        for kind, evs in by_kind.items():
            evs = sorted(evs, key=lambda e: e.start)
            for a, b in zip(evs, evs[1:]):
                if b.start < a.end:
                    raise ScriptError(f"overlapping {kind} events")


def _num(text):
    v = float(text)
    return int(v) if v.is_integer() and "." not in text and "e" not in text.lower() else v


def parse_script(text) -> SynthScript:
    script = SynthScript()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("event:"):
                script.events.append(_parse_event(line[len("event:"):].split()))
                continue
            key, _, value = (s.strip() for s in line.partition("="))
            if not _:
                raise ScriptError("expected key = value")
            if key == "target":
                script.target = tuple(float(v) for v in value.split(","))
                if len(script.target) != 4:
                    raise ScriptError("target needs x,y,w,h")
            elif key in ("width", "height", "frames", "texture_seed", "background_seed", "texture_blocks"):
                setattr(script, key, int(value))
            elif key == "noise":
                script.noise = float(value)
            elif key == "allow_out_of_view":
                script.allow_out_of_view = value.lower() in ("1", "true", "yes")
            elif key == "name":
                script.name = value
            else:
                raise ScriptError(f"unknown key {key!r}")
        except ScriptError as exc:
            raise ScriptError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise ScriptError(f"line {lineno}: {exc}") from None
    script.validate()
    return script


def _parse_event(tokens) -> Event:
    if not tokens:
        raise ScriptError("empty event")
    kind, params = tokens[0], {}
    for tok in tokens[1:]:
        k, sep, v = tok.partition("=")
        if not sep:
            raise ScriptError(f"bad event token {tok!r}")
        params[k] = tuple(float(x) for x in v.split(",")) if k == "box" else _num(v)
    if kind == "teleport":
        at = int(params.pop("at", params.pop("start", 0)))
        start, end = at, at + 1
    else:
        start = int(params.pop("start", 0))
        end = int(params.pop("end", 1 << 30))
    return Event(kind, start, end, params)


def format_script(script: SynthScript) -> str:
    lines = [
        f"name = {script.name}",
        f"width = {script.width}",
        f"height = {script.height}",
        f"frames = {script.frames}",
        "target = " + ",".join(repr(float(v)) for v in script.target),
        f"texture_seed = {script.texture_seed}",
        f"background_seed = {script.background_seed}",
        f"texture_blocks = {script.texture_blocks}",
        f"noise = {script.noise!r}",
        f"allow_out_of_view = {str(script.allow_out_of_view).lower()}",
    ]
    for ev in script.events:
        parts = [ev.kind]
        if ev.kind == "teleport":
            parts.append(f"at={ev.start}")
        else:
            parts += [f"start={ev.start}", f"end={ev.end}"]
        for k, v in ev.params.items():
            parts.append(f"{k}=" + (",".join(repr(float(x)) for x in v) if k == "box" else repr(v)))
        lines.append("event: " + " ".join(parts))
    return "\n".join(lines) + "\n"


def ground_truth(script: SynthScript) -> list[BoundingBox]:
    """True target box per frame (events are applied before rendering frame t)."""
    x, y, w, h = (float(v) for v in script.target)
    cx, cy = x + w / 2.0, y + h / 2.0
    boxes = []
    teleported = False
    for t in range(script.frames):
        for ev in script.events:
            if not ev.active(t):
                continue
            if ev.kind == "translate" and t > ev.start:
                cx += ev.params["vx"]
                cy += ev.params["vy"]
            elif ev.kind == "scale" and t > ev.start:
                w *= ev.params["rate"]
                h *= ev.params["rate"]
            elif ev.kind == "teleport":
                cx += ev.params["dx"]
                cy += ev.params["dy"]
                teleported = True
        box = BoundingBox.from_center(cx, cy, w, h)
        visible = box.intersection_area(BoundingBox(0, 0, script.width, script.height)) / box.area
        if visible <= 0.0 and not script.allow_out_of_view:
            raise ScriptError(f"target fully out of frame at frame {t}")
        if visible < 0.5 and not teleported and not script.allow_out_of_view:
            raise ScriptError(f"target less than half visible at frame {t}")
        boxes.append(box)
    return boxes


def _smooth_noise(rng, width, height, cells, lo, hi):
    coarse = rng.random((cells[1], cells[0], 3))
    img = crop_resize(coarse, frame_box(coarse), (width, height))
    return lo + (hi - lo) * img


def _texture(rng, blocks, palette):
    idx = rng.integers(0, len(palette), size=(blocks, blocks))
    return palette[idx]


def _paste(frame, tex, box: BoundingBox, alpha=1.0):
    """Render ``tex`` into the pixels whose centers fall inside ``box``."""
    H, W = frame.shape[:2]
    c0 = max(int(np.ceil(box.x - 0.5)), 0)
    c1 = min(int(np.ceil(box.x + box.w - 0.5)), W)
    r0 = max(int(np.ceil(box.y - 0.5)), 0)
    r1 = min(int(np.ceil(box.y + box.h - 0.5)), H)
    if c1 <= c0 or r1 <= r0:
        return
    th, tw = tex.shape[:2]
    u = np.clip((np.arange(c0, c1) + 0.5 - box.x) / box.w * tw - 0.5, 0, tw - 1)
    v = np.clip((np.arange(r0, r1) + 0.5 - box.y) / box.h * th - 0.5, 0, th - 1)
    u0 = np.minimum(np.floor(u).astype(int), tw - 2) if tw > 1 else np.zeros(len(u), int)
    v0 = np.minimum(np.floor(v).astype(int), th - 2) if th > 1 else np.zeros(len(v), int)
    fu = (u - u0)[None, :, None] if tw > 1 else 0.0
    fv = (v - v0)[:, None, None] if th > 1 else 0.0
    u1 = np.minimum(u0 + 1, tw - 1)
    v1 = np.minimum(v0 + 1, th - 1)
    top = tex[v0][:, u0] * (1 - fu) + tex[v0][:, u1] * fu
    bot = tex[v1][:, u0] * (1 - fu) + tex[v1][:, u1] * fu
    patch = top * (1 - fv) + bot * fv
    region = frame[r0:r1, c0:c1]
    frame[r0:r1, c0:c1] = (1.0 - alpha) * region + alpha * patch


def _upsample_blocks(tex, factor=8):
    # hard-edged blocks; bilinear pasting then only softens the outermost pixels
    return np.repeat(np.repeat(tex, factor, axis=0), factor, axis=1)


def synth_generate(script: SynthScript, seed=0) -> Sequence:
    """Render ``script`` deterministically; same (script, seed) gives identical frames."""
    script.validate()
    gts = ground_truth(script)
    rng_tex = np.random.default_rng([seed, script.texture_seed, 1])
    rng_bg = np.random.default_rng([seed, script.background_seed, 2])
    background = _smooth_noise(rng_bg, script.width, script.height, (12, 9), 0.3, 0.6)
    background *= np.array([0.7, 0.9, 0.6])
    texture = _upsample_blocks(_texture(rng_tex, script.texture_blocks, TARGET_PALETTE))

    clutter_layers = {}
    for ev in script.events:
        if ev.kind == "clutter":
            crng = np.random.default_rng([seed, int(ev.params["seed"]), 3])
            items = []
            tw, th = script.target[2], script.target[3]
            for _ in range(6):
                cw, ch = tw * crng.uniform(0.7, 1.3), th * crng.uniform(0.7, 1.3)
                cb = BoundingBox(
                    crng.uniform(0, script.width - cw), crng.uniform(0, script.height - ch), cw, ch
                )
                items.append((cb, _upsample_blocks(_texture(crng, script.texture_blocks, CLUTTER_PALETTE))))
            clutter_layers[id(ev)] = items

    frames = []
    for t, gt in enumerate(gts):
        f = background.copy()
        for ev in script.events:
            if ev.kind == "clutter" and ev.active(t):
                for cb, ctex in clutter_layers[id(ev)]:
                    _paste(f, ctex, cb)
        _paste(f, texture, gt)
        for ev in script.events:
            if not ev.active(t):
                continue
            if ev.kind == "occlude":
                ob = BoundingBox(*ev.params["box"])
                _paste(f, np.full((2, 2, 3), 0.5), ob, alpha=float(ev.params["opacity"]))
            elif ev.kind == "illuminate":
                f *= float(ev.params["gain"])
        if script.noise > 0:
            nrng = np.random.default_rng([seed, t, 4])
            f += nrng.normal(0.0, script.noise, f.shape)
        # quantized like a camera frame, so writing to disk and loading back is lossless
        frames.append(np.round(np.clip(f, 0.0, 1.0) * 255.0).astype(np.uint8))
    return Sequence(script.name, frames=frames, ground_truth=gts)
