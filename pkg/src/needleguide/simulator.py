"""Deterministic stand-in for the optical tracker and the phantom bench.

Scenarios script rigid-body motion with full ground truth: a pivot sweep
about a fixed needle tip, a spin about the shaft axis, paired hand-eye
motions, an ultrasound sweep with exact point pairs, a steerable insertion,
and a static body. Gaussian noise is seeded and reproducible: the same
(scenario, noise, seed, rate) always yields a bit-identical stream.

Ground truth never travels over the wire; it is exposed as separate records
destined for the truth file.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

import numpy as np

from .calibration.results import NeedleCalibration
from .geometry import Pose, Quat, Vec3, compose, invert, rotation_between, transform_point
from .guidance import (
    GuidanceStatus,
    NeedleState,
    TrajectoryPlan,
    apply_needle_calibration,
    compute_guidance,
)
from . import protocol as proto

BODY_HEADSET = 1
BODY_NEEDLE = 2
BODY_PROBE = 3
BODY_HEADSET_DISPLAY = 4   # the display's self-tracked pose stream

DEFAULT_BODY_NAMES = {
    BODY_HEADSET: "headset",
    BODY_NEEDLE: "needle",
    BODY_PROBE: "probe",
    BODY_HEADSET_DISPLAY: "headset_display",
}

US_STREAM_ID = 1
WORKSPACE_HALF_M = 0.25     # needle body clamped to a 0.5 m cube
DEFAULT_RATE_HZ = 120.0     # nominal camera rate


class CommandRejected(ValueError):
    """A SimCommand not valid for the active scenario or mode."""


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class NoiseModel:
    position_sigma: float = 0.0      # m
    orientation_sigma: float = 0.0   # radians
    seed: int = 0

    def __post_init__(self):
        if self.position_sigma < 0.0 or self.orientation_sigma < 0.0:
            raise InvalidScenario("noise sigmas must be >= 0")


@dataclass(frozen=True, slots=True)
class SphericalTarget:
    center: Vec3    # world frame
    radius: float   # m


# --------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True, slots=True)
class PivotSweep:
    tip_world: Vec3 = Vec3(0.05, -0.04, 0.12)
    tip_offset: Vec3 = Vec3(0.0, 0.0, 0.15)     # body frame
    n_frames: int = 200
    cone_deg: float = 35.0

    def truth(self) -> list[dict]:
        return [{
            "type": "truth",
            "scenario": "pivot",
            "tip_world": [self.tip_world.x, self.tip_world.y, self.tip_world.z],
            "tip_offset": [self.tip_offset.x, self.tip_offset.y, self.tip_offset.z],
        }]


@dataclass(frozen=True, slots=True)
class AxisSpin:
    axis_dir: Vec3 = Vec3(0.0, 0.0, 1.0)        # body frame, canonical sign
    world_axis: Vec3 = Vec3(0.0, 0.0, 1.0)
    center: Vec3 = Vec3(0.02, 0.01, 0.1)
    radius: float = 0.02
    n_frames: int = 100

    def truth(self) -> list[dict]:
        w = self.world_axis.normalized()
        return [{
            "type": "truth",
            "scenario": "axis_spin",
            "axis_dir": [self.axis_dir.x, self.axis_dir.y, self.axis_dir.z],
            "world_axis": [w.x, w.y, w.z],
            "center": [self.center.x, self.center.y, self.center.z],
            "radius": self.radius,
        }]


@dataclass(frozen=True, slots=True)
class HandEyeSet:
    true_x: Pose = field(default_factory=Pose.identity)
    n_motions: int = 10

    def truth(self) -> list[dict]:
        p, q = self.true_x.position, self.true_x.orientation
        return [{
            "type": "truth",
            "scenario": "handeye",
            "position": [p.x, p.y, p.z],
            "quaternion": [q.w, q.x, q.y, q.z],
        }]


@dataclass(frozen=True, slots=True)
class UsSweep:
    image_to_probe: Pose = field(default_factory=Pose.identity)
    pixel_spacing: float = 0.0002    # m/px
    n_pairs: int = 12
    width: int = 160
    height: int = 120
    render_video: bool = True

    def truth(self) -> list[dict]:
        p, q = self.image_to_probe.position, self.image_to_probe.orientation
        return [{
            "type": "truth",
            "scenario": "us_sweep",
            "position": [p.x, p.y, p.z],
            "quaternion": [q.w, q.x, q.y, q.z],
            "pixel_spacing": self.pixel_spacing,
        }]


@dataclass(frozen=True, slots=True)
class Insertion:
    plan: TrajectoryPlan = field(
        default_factory=lambda: TrajectoryPlan(
            entry=Vec3(0.0, 0.0, 0.0), target=Vec3(0.0, 0.0, 0.12), id=1
        )
    )
    scripted: bool = True            # False: pose moves only on SimCommands
    needle_calib: NeedleCalibration = field(
        default_factory=lambda: NeedleCalibration(
            tip_offset=Vec3(0.0, 0.0, 0.15),
            axis_dir=Vec3(0.0, 0.0, 1.0),
            tip_rms=0.0,
            axis_rms=0.0,
        )
    )
    initial_lateral: Vec3 = Vec3(0.03, 0.0, 0.0)   # tip offset from entry
    n_frames: Optional[int] = 600                  # None: unbounded
    video_every: int = 4
    width: int = 160
    height: int = 120
    probe_pose: Pose = field(
        default_factory=lambda: Pose(Vec3(0.1, 0.0, 0.06), Quat.identity(), 0.0)
    )

    def truth(self) -> list[dict]:
        c = self.needle_calib
        return [{
            "type": "truth",
            "scenario": "insertion",
            "entry": [self.plan.entry.x, self.plan.entry.y, self.plan.entry.z],
            "target": [self.plan.target.x, self.plan.target.y, self.plan.target.z],
            "tip_offset": [c.tip_offset.x, c.tip_offset.y, c.tip_offset.z],
            "axis_dir": [c.axis_dir.x, c.axis_dir.y, c.axis_dir.z],
        }]


@dataclass(frozen=True, slots=True)
class Static:
    pose: Pose = field(default_factory=Pose.identity)
    body_id: int = BODY_HEADSET
    n_frames: int = 100

    def truth(self) -> list[dict]:
        return [{"type": "truth", "scenario": "static", "body_id": self.body_id}]


Scenario = Union[PivotSweep, AxisSpin, HandEyeSet, UsSweep, Insertion, Static]


def make_scenario(name: str, seed: int = 0, **overrides) -> Scenario:
    """Named scenario with ground-truth parameters drawn from the seed."""
    rng = np.random.default_rng(seed)
    name = name.lower()
    if name in ("pivot", "pivot_sweep", "tip"):
        return PivotSweep(**overrides)
    if name in ("axis_spin", "spin", "axis"):
        return AxisSpin(**overrides)
    if name in ("handeye", "hand_eye"):
        if "true_x" not in overrides:
            overrides["true_x"] = _random_pose(rng, trans_scale=0.4)
        return HandEyeSet(**overrides)
    if name in ("us_sweep", "usplane", "us"):
        if "image_to_probe" not in overrides:
            overrides["image_to_probe"] = _random_pose(rng, trans_scale=0.05)
        return UsSweep(**overrides)
    if name == "insertion":
        return Insertion(**overrides)
    if name == "insertion_manual":
        # operator-steered: the needle moves only on nudge commands
        overrides.setdefault("scripted", False)
        overrides.setdefault("n_frames", None)
        return Insertion(**overrides)
    if name == "static":
        return Static(**overrides)
    raise InvalidScenario(f"unknown scenario {name!r}")


def _random_pose(rng: np.random.Generator, trans_scale: float) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.3, 2.5)
    q = Quat.from_axis_angle(Vec3.from_array(axis), float(angle))
    t = Vec3.from_array(rng.uniform(-trans_scale, trans_scale, size=3))
    return Pose(t, q, 0.0)


# --------------------------------------------------------------------------
# synthetic ultrasound frames

def synth_us_frame(
    probe_pose: Pose,
    scene: list[SphericalTarget],
    width: int,
    height: int,
    spacing: float,
    image_to_probe: Pose = None,
    stream_id: int = US_STREAM_ID,
    sequence: int = 0,
    timestamp: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> proto.VideoFrame:
    """Gray8 scan-plane image: seeded speckle plus one bright disc per
    sphere the plane currently cuts (disc radius = intersection circle).

    Image axes: x right, y down, origin at the top-left pixel; pixel (u, v)
    sits at (u * spacing, v * spacing, 0) in the image frame.
    """
    if spacing <= 0.0:
        raise InvalidScenario("pixel spacing must be positive")
    if image_to_probe is None:
        image_to_probe = Pose.identity()
    if rng is None:
        rng = np.random.default_rng(0)

    img = np.clip(rng.normal(40.0, 14.0, size=(height, width)), 0, 120).astype(np.uint8)

    world_to_image = compose(invert(image_to_probe), invert(probe_pose))
    vv, uu = np.mgrid[0:height, 0:width]
    for target in scene:
        c = transform_point(world_to_image, target.center)
        if abs(c.z) >= target.radius:
            continue
        disc_r_px = math.sqrt(target.radius**2 - c.z**2) / spacing
        cu, cv = c.x / spacing, c.y / spacing
        mask = (uu - cu) ** 2 + (vv - cv) ** 2 <= disc_r_px**2
        img[mask] = 230

    return proto.VideoFrame(
        stream_id=stream_id,
        sequence=sequence,
        timestamp=timestamp,
        width=width,
        height=height,
        pixel_format=proto.VIDEO_FORMAT_GRAY8,
        data=img.tobytes(),
    )


# --------------------------------------------------------------------------
# the simulator

SimEvent = Union[proto.Message, dict]


class Simulator:
    """Generates the scenario's message stream; commands apply between frames."""

    def __init__(
        self,
        scenario: Scenario,
        noise: NoiseModel = NoiseModel(),
        rate_hz: float = DEFAULT_RATE_HZ,
    ):
        if not 1.0 <= rate_hz <= 1000.0:
            raise InvalidScenario(f"rate_hz must be in [1, 1000], got {rate_hz}")
        self.scenario = scenario
        self.rate_hz = rate_hz
        self._noise = noise
        self._rng = np.random.default_rng(noise.seed)
        self._pos_sigma = noise.position_sigma
        self._ori_sigma = noise.orientation_sigma
        self._commands: deque[proto.SimCommand] = deque()
        self._seq: dict[int, int] = {}
        self._video_seq = 0
        self._restart = False

    # -- command intake (thread-safe via GIL append/popleft)

    def apply_command(self, cmd: proto.SimCommand) -> None:
        """Queue a command; it takes effect before the next generated frame.

        Raises CommandRejected immediately when the command can never apply
        to the active scenario.
        """
        if cmd.kind in (proto.SimCommandKind.NUDGE_TRANSLATE, proto.SimCommandKind.NUDGE_ROTATE):
            sc = self.scenario
            if not isinstance(sc, Insertion) or sc.scripted:
                raise CommandRejected(
                    "needle nudges are only valid in a manual insertion scenario"
                )
        self._commands.append(cmd)

    # -- helpers

    def _noisy_frame(self, body_id: int, pose: Pose, valid: bool = True) -> proto.RigidBodyFrame:
        seq = self._seq.get(body_id, 0)
        self._seq[body_id] = seq + 1
        p = pose.position
        q = pose.orientation
        if self._pos_sigma > 0.0:
            dp = self._rng.normal(0.0, self._pos_sigma, size=3)
            p = Vec3(p.x + dp[0], p.y + dp[1], p.z + dp[2])
        if self._ori_sigma > 0.0:
            axis = self._rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = float(self._rng.normal(0.0, self._ori_sigma))
            q = Quat.from_axis_angle(Vec3.from_array(axis), angle) * q
        return proto.RigidBodyFrame(
            body_id=body_id,
            sequence=seq,
            timestamp=pose.timestamp,
            position=p,
            orientation=q,
            valid=valid,
        )

    def _drain_commands(self, state: dict) -> None:
        while self._commands:
            cmd = self._commands.popleft()
            if cmd.kind == proto.SimCommandKind.SET_NOISE:
                self._pos_sigma = max(0.0, cmd.position_sigma)
                self._ori_sigma = max(0.0, cmd.orientation_sigma)
            elif cmd.kind == proto.SimCommandKind.SELECT_SCENARIO:
                self.scenario = make_scenario(cmd.scenario, seed=self._noise.seed)
                self._restart = True
            elif cmd.kind == proto.SimCommandKind.NUDGE_TRANSLATE:
                if "needle_pose" in state:
                    state["needle_pose"] = _nudge_translate(state["needle_pose"], cmd.delta)
            elif cmd.kind == proto.SimCommandKind.NUDGE_ROTATE:
                if "needle_pose" in state:
                    state["needle_pose"] = _nudge_rotate(state["needle_pose"], cmd.delta)

    def truth_records(self) -> list[dict]:
        return self.scenario.truth()

    # -- generation

    def events(self) -> Iterator[SimEvent]:
        """The scenario's stream: wire messages plus scenario-data records."""
        while True:
            self._restart = False
            yield from self._run_scenario()
            if not self._restart:
                return

    def _run_scenario(self) -> Iterator[SimEvent]:
        sc = self.scenario
        if isinstance(sc, PivotSweep):
            yield from self._run_pivot(sc)
        elif isinstance(sc, AxisSpin):
            yield from self._run_spin(sc)
        elif isinstance(sc, HandEyeSet):
            yield from self._run_handeye(sc)
        elif isinstance(sc, UsSweep):
            yield from self._run_us_sweep(sc)
        elif isinstance(sc, Insertion):
            yield from self._run_insertion(sc)
        elif isinstance(sc, Static):
            yield from self._run_static(sc)
        else:
            raise InvalidScenario(f"unsupported scenario {type(sc).__name__}")

    def _tick(self, i: int) -> float:
        return i / self.rate_hz

    def _run_pivot(self, sc: PivotSweep) -> Iterator[SimEvent]:
        if sc.n_frames < 10:
            raise InvalidScenario("pivot sweep needs at least 10 frames")
        cone = math.radians(sc.cone_deg)
        state: dict = {}
        for i in range(sc.n_frames):
            self._drain_commands(state)
            if self._restart:
                return
            phase = 2.0 * math.pi * i / sc.n_frames * 3.0
            # tilt oscillates so the sweep spans two rotation axes and the
            # traced sphere points are not coplanar
            tilt = cone * (0.55 + 0.45 * math.sin(2.0 * math.pi * i / sc.n_frames))
            q = Quat.from_axis_angle(Vec3(0, 0, 1), phase) * Quat.from_axis_angle(
                Vec3(1, 0, 0), tilt
            )
            pos = sc.tip_world - q.rotate(sc.tip_offset)
            yield self._noisy_frame(BODY_NEEDLE, Pose(pos, q, self._tick(i)))

    def _run_spin(self, sc: AxisSpin) -> Iterator[SimEvent]:
        if sc.n_frames < 8:
            raise InvalidScenario("axis spin needs at least 8 frames")
        w = sc.world_axis.normalized()
        base = rotation_between(sc.axis_dir, w)
        # radial arm perpendicular to the spin axis
        helper = Vec3(1, 0, 0) if abs(w.x) < 0.9 else Vec3(0, 1, 0)
        arm = w.cross(helper).normalized() * sc.radius
        state: dict = {}
        for i in range(sc.n_frames):
            self._drain_commands(state)
            if self._restart:
                return
            theta = 2.0 * math.pi * i / sc.n_frames
            spin = Quat.from_axis_angle(w, theta)
            q = spin * base
            pos = sc.center + spin.rotate(arm)
            yield self._noisy_frame(BODY_NEEDLE, Pose(pos, q, self._tick(i)))

    def _run_handeye(self, sc: HandEyeSet) -> Iterator[SimEvent]:
        if sc.n_motions < 2:
            raise InvalidScenario("hand-eye needs at least 2 motions")
        rng = np.random.default_rng(self._noise.seed + 1)
        x_inv = invert(sc.true_x)
        state: dict = {}
        for i in range(sc.n_motions + 1):
            self._drain_commands(state)
            if self._restart:
                return
            t = self._tick(i)
            tracker = replace(_random_pose(rng, trans_scale=0.3), timestamp=t)
            display = replace(compose(x_inv, tracker), timestamp=t)
            yield self._noisy_frame(BODY_HEADSET, tracker)
            yield self._noisy_frame(BODY_HEADSET_DISPLAY, display)

    def _run_us_sweep(self, sc: UsSweep) -> Iterator[SimEvent]:
        if sc.n_pairs < 3:
            raise InvalidScenario("us sweep needs at least 3 pairs")
        rng = np.random.default_rng(self._noise.seed + 2)
        state: dict = {}
        for i in range(sc.n_pairs):
            self._drain_commands(state)
            if self._restart:
                return
            t = self._tick(i)
            probe = replace(_random_pose(rng, trans_scale=0.15), timestamp=t)
            u = float(rng.uniform(8.0, sc.width - 8.0))
            v = float(rng.uniform(8.0, sc.height - 8.0))
            img_pt = Vec3(u * sc.pixel_spacing, v * sc.pixel_spacing, 0.0)
            world = transform_point(probe, transform_point(sc.image_to_probe, img_pt))
            frame = self._noisy_frame(BODY_PROBE, probe)
            yield frame
            yield {
                "type": "us_point_pair",
                "sequence": frame.sequence,
                "timestamp": t,
                "world": [world.x, world.y, world.z],
                "image": [u, v],
            }
            if sc.render_video:
                target = SphericalTarget(center=world, radius=0.004)
                self._video_seq += 1
                yield synth_us_frame(
                    probe,
                    [target],
                    sc.width,
                    sc.height,
                    sc.pixel_spacing,
                    image_to_probe=sc.image_to_probe,
                    sequence=self._video_seq,
                    timestamp=t,
                    rng=np.random.default_rng(hash((self._noise.seed, i)) & 0x7FFFFFFF),
                )

    def _run_insertion(self, sc: Insertion) -> Iterator[SimEvent]:
        u = sc.plan.direction()
        tip0 = sc.plan.entry + sc.initial_lateral
        base_q = rotation_between(sc.needle_calib.axis_dir, u)
        pose = Pose(tip0 - base_q.rotate(sc.needle_calib.tip_offset), base_q, 0.0)
        state = {"needle_pose": pose}

        yield proto.PlanUpdate.from_plan(sc.plan)
        yield proto.CalibrationResult(
            kind=proto.CalibrationKind.TIP,
            vector=sc.needle_calib.tip_offset,
            rms=sc.needle_calib.tip_rms,
        )
        yield proto.CalibrationResult(
            kind=proto.CalibrationKind.AXIS,
            vector=sc.needle_calib.axis_dir,
            rms=sc.needle_calib.axis_rms,
        )

        scene = [SphericalTarget(center=sc.plan.target, radius=0.005)]
        i = 0
        while sc.n_frames is None or i < sc.n_frames:
            self._drain_commands(state)
            if self._restart:
                return
            if sc.scripted:
                state["needle_pose"] = _scripted_step(state["needle_pose"], sc)
            t = self._tick(i)
            pose = replace(state["needle_pose"], timestamp=t)
            state["needle_pose"] = pose
            yield self._noisy_frame(BODY_NEEDLE, pose)
            yield self._noisy_frame(BODY_PROBE, replace(sc.probe_pose, timestamp=t))
            if sc.video_every > 0 and i % sc.video_every == 0:
                self._video_seq += 1
                yield synth_us_frame(
                    sc.probe_pose,
                    scene,
                    sc.width,
                    sc.height,
                    0.0005,
                    sequence=self._video_seq,
                    timestamp=t,
                    rng=np.random.default_rng(hash((self._noise.seed, i)) & 0x7FFFFFFF),
                )
            i += 1

    def _run_static(self, sc: Static) -> Iterator[SimEvent]:
        state: dict = {}
        for i in range(sc.n_frames):
            self._drain_commands(state)
            if self._restart:
                return
            yield self._noisy_frame(sc.body_id, replace(sc.pose, timestamp=self._tick(i)))


def _clamp_workspace(p: Vec3) -> Vec3:
    h = WORKSPACE_HALF_M
    return Vec3(
        min(h, max(-h, p.x)), min(h, max(-h, p.y)), min(h, max(-h, p.z))
    )


def _nudge_translate(pose: Pose, delta: Vec3) -> Pose:
    return replace(pose, position=_clamp_workspace(pose.position + delta))


def _nudge_rotate(pose: Pose, rotvec: Vec3) -> Pose:
    q = Quat.from_rotvec(rotvec) * pose.orientation
    return replace(pose, orientation=q)


def scripted_nudge(
    guidance_progress: float,
    guidance_lateral: Vec3,
    plan_direction: Vec3,
    plan_length: float,
    lateral_gain: float = 0.35,
    lateral_cap: float = 0.002,
    advance_step: float = 0.0015,
    advance_when_within: float = 0.0025,
) -> Vec3:
    """The reference proportional controller: one translation nudge from
    guidance alone. Corrects lateral offset first, advances along the plan
    once close to it, stops past the target."""
    correction = -lateral_gain * guidance_lateral
    mag = correction.norm()
    if mag > lateral_cap:
        correction = correction * (lateral_cap / mag)
    advance = Vec3.zero()
    if guidance_lateral.norm() < advance_when_within and guidance_progress < 0.98:
        remaining = max(0.0, (1.0 - guidance_progress)) * plan_length
        advance = plan_direction * min(advance_step, 0.5 * remaining)
    return correction + advance


def _scripted_step(pose: Pose, sc: Insertion) -> Pose:
    needle = apply_needle_calibration(pose, sc.needle_calib)
    g = compute_guidance(sc.plan, needle)
    if g.status == GuidanceStatus.ON_TRACK and g.progress >= 0.98:
        return pose
    nudge = scripted_nudge(
        g.progress, g.lateral_offset, sc.plan.direction(), sc.plan.length()
    )
    return _nudge_translate(pose, nudge)
