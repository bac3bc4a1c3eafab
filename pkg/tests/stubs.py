"""Scripted verifying-loop stand-ins for runtime tests."""

from ptav.runtime import Feedback


class ScriptedVerifier:
    """Fails chosen (frame, epoch) pairs; everything else passes.

    ``plan`` maps a frame index to ``(corrected_box or None, new_interval)``.
    Each planned failure fires once, on the first request for that frame.
    """

    def __init__(self, plan=None, redirect=None):
        self.plan = dict(plan or {})
        self.redirect = redirect or {}
        self.seen = []

    def init(self, frame, box):
        pass

    def handle(self, req, trace):
        self.seen.append((req.frame_index, req.epoch))
        if req.frame_index in self.plan:
            box, interval = self.plan.pop(req.frame_index)
            target = self.redirect.get(req.frame_index, req.frame_index)
            return Feedback(target, False, box, interval, req.epoch, 0.0)
        return Feedback(req.frame_index, True, epoch=req.epoch, score=1.0)
