/**
 * Scene state and rendering.
 *
 * SceneModel holds only the latest state per body/stream: network callbacks
 * mutate it, the render loop reads it once per frame, so drawing never
 * blocks on the network and a message burst costs one redraw.
 */

import * as THREE from "three";

import type {
  CalibrationResult,
  Guidance,
  Message,
  PlanUpdate,
  Quat,
  Vec3,
  VideoFrame,
} from "./protocol";

export const BODY_NAMES: Record<number, string> = {
  1: "headset",
  2: "needle",
  3: "probe",
  4: "headset_display",
};
export const BODY_NEEDLE = 2;
export const BODY_PROBE = 3;

export const STALE_AFTER_S = 0.5;
const NEEDLE_DRAW_LENGTH = 0.15;

export type ConnectionState = "connecting" | "connected" | "reconnecting";

export interface BodyState {
  position: Vec3;
  quaternion: Quat;
  sequence: number;
  lastSeen: number; // seconds, performance clock
}

export interface NeedleCalib {
  tip_offset: Vec3;
  axis_dir: Vec3;
}

export interface UsPlaneCalib {
  position: Vec3;
  quaternion: Quat;
  pixel_spacing: number;
}

export class SceneModel {
  bodies = new Map<number, BodyState>();
  plan: PlanUpdate | null = null;
  guidance: Guidance | null = null;
  video = new Map<number, VideoFrame>(); // latest frame per stream
  videoDirty = new Set<number>();
  needleCalib: Partial<NeedleCalib> = {};
  usPlane: UsPlaneCalib | null = null;
  connection: ConnectionState = "connecting";
  reconnectAttempts = 0;
  lastError = "";

  apply(msg: Message, now: number): void {
    switch (msg.type) {
      case "rigid_body_frame":
        this.bodies.set(msg.body_id, {
          position: msg.position,
          quaternion: msg.quaternion,
          sequence: msg.sequence,
          lastSeen: now,
        });
        break;
      case "plan_update":
        this.plan = msg;
        break;
      case "guidance":
        this.guidance = msg;
        break;
      case "video_frame":
        this.video.set(msg.stream_id, msg);
        this.videoDirty.add(msg.stream_id);
        break;
      case "calibration_result":
        this.applyCalibration(msg);
        break;
      case "error":
        this.lastError = `server error ${msg.code}: ${msg.text}`;
        break;
      default:
        break; // heartbeats, hello replies, unknown types
    }
  }

  private applyCalibration(msg: CalibrationResult): void {
    if (msg.kind === "tip") this.needleCalib.tip_offset = msg.tip_offset;
    else if (msg.kind === "axis") this.needleCalib.axis_dir = msg.axis_dir;
    else if (msg.kind === "us_plane") {
      this.usPlane = {
        position: msg.position,
        quaternion: msg.quaternion,
        pixel_spacing: msg.pixel_spacing,
      };
    }
  }

  staleBodies(now: number): string[] {
    const out: string[] = [];
    for (const [id, body] of this.bodies) {
      if (now - body.lastSeen > STALE_AFTER_S) out.push(BODY_NAMES[id] ?? `body ${id}`);
    }
    return out;
  }
}

// ---------------------------------------------------------------------------

function vec(v: Vec3): THREE.Vector3 {
  return new THREE.Vector3(v[0], v[1], v[2]);
}

function quat(q: Quat): THREE.Quaternion {
  return new THREE.Quaternion(q[1], q[2], q[3], q[0]); // wire is scalar-first
}

function gray8ToRgba(frame: VideoFrame) {
  const out = new Uint8Array(frame.width * frame.height * 4);
  for (let i = 0; i < frame.data.length; i++) {
    const v = frame.data[i];
    out[4 * i] = v;
    out[4 * i + 1] = v;
    out[4 * i + 2] = v;
    out[4 * i + 3] = 255;
  }
  return out;
}

export class SceneRenderer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;

  private bodyMeshes = new Map<number, THREE.Object3D>();
  private planLine: THREE.Line;
  private needleLine: THREE.Line;
  private triangle: THREE.Mesh;
  private magArrow: THREE.ArrowHelper;
  private usGroup: THREE.Group;
  private usMesh: THREE.Mesh | null = null;
  private usTexture: THREE.DataTexture | null = null;
  private usSize: [number, number] = [0, 0];

  magnification = 5;
  // spherical camera state, orbited by pointer drags
  private orbit = { radius: 0.55, theta: Math.PI / 4, phi: 1.15 };

  constructor(container: HTMLElement) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setSize(container.clientWidth, container.clientHeight);
    container.appendChild(this.renderer.domElement);
    this.camera = new THREE.PerspectiveCamera(
      50, container.clientWidth / container.clientHeight, 0.01, 10,
    );
    this.updateCamera();

    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.8));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(1, 2, 1);
    this.scene.add(sun);
    const grid = new THREE.GridHelper(0.5, 10, 0x335577, 0x223344);
    this.scene.add(grid);
    this.scene.add(new THREE.AxesHelper(0.08));

    const planGeom = new THREE.BufferGeometry().setFromPoints([
      new THREE.Vector3(), new THREE.Vector3(),
    ]);
    this.planLine = new THREE.Line(
      planGeom, new THREE.LineBasicMaterial({ color: 0x22cc44 }),
    );
    this.planLine.visible = false;
    this.scene.add(this.planLine);

    const needleGeom = new THREE.BufferGeometry().setFromPoints([
      new THREE.Vector3(), new THREE.Vector3(),
    ]);
    this.needleLine = new THREE.Line(
      needleGeom, new THREE.LineBasicMaterial({ color: 0xee3333 }),
    );
    this.needleLine.visible = false;
    this.scene.add(this.needleLine);

    const triGeom = new THREE.BufferGeometry();
    triGeom.setAttribute("position", new THREE.BufferAttribute(new Float32Array(9), 3));
    this.triangle = new THREE.Mesh(
      triGeom,
      new THREE.MeshBasicMaterial({
        color: 0xeecc22, side: THREE.DoubleSide, transparent: true, opacity: 0.75,
      }),
    );
    this.triangle.visible = false;
    this.scene.add(this.triangle);

    this.magArrow = new THREE.ArrowHelper(
      new THREE.Vector3(1, 0, 0), new THREE.Vector3(), 0.01, 0x33ccee, 0.004, 0.003,
    );
    this.magArrow.visible = false;
    this.scene.add(this.magArrow);

    this.usGroup = new THREE.Group();
    this.scene.add(this.usGroup);
  }

  resize(width: number, height: number): void {
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(width, height);
  }

  get domElement(): HTMLCanvasElement {
    return this.renderer.domElement;
  }

  orbitBy(dx: number, dy: number): void {
    this.orbit.theta -= dx * 0.005;
    this.orbit.phi = Math.min(2.8, Math.max(0.2, this.orbit.phi - dy * 0.005));
    this.updateCamera();
  }

  zoomBy(factor: number): void {
    this.orbit.radius = Math.min(2.5, Math.max(0.1, this.orbit.radius * factor));
    this.updateCamera();
  }

  private updateCamera(): void {
    const { radius, theta, phi } = this.orbit;
    this.camera.position.set(
      radius * Math.sin(phi) * Math.cos(theta),
      radius * Math.cos(phi),
      radius * Math.sin(phi) * Math.sin(theta),
    );
    this.camera.lookAt(0, 0, 0);
  }

  /** Intersection of a pointer event with the y=0 ground plane. */
  groundPoint(clientX: number, clientY: number): Vec3 | null {
    const rect = this.domElement.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((clientX - rect.left) / rect.width) * 2 - 1,
      -((clientY - rect.top) / rect.height) * 2 + 1,
    );
    const ray = new THREE.Raycaster();
    ray.setFromCamera(ndc, this.camera);
    const hit = new THREE.Vector3();
    if (ray.ray.intersectPlane(new THREE.Plane(new THREE.Vector3(0, 1, 0), 0), hit)) {
      return [hit.x, hit.y, hit.z];
    }
    return null;
  }

  private bodyMesh(id: number): THREE.Object3D {
    let mesh = this.bodyMeshes.get(id);
    if (mesh) return mesh;
    const group = new THREE.Group();
    const color = id === BODY_NEEDLE ? 0xcc6655 : id === BODY_PROBE ? 0x5588cc : 0x888899;
    const material = new THREE.MeshStandardMaterial({ color, transparent: true });
    const shape =
      id === BODY_NEEDLE
        ? new THREE.SphereGeometry(0.006, 12, 12)
        : new THREE.BoxGeometry(0.03, 0.012, 0.02);
    group.add(new THREE.Mesh(shape, material));
    group.add(new THREE.AxesHelper(0.025));
    this.bodyMeshes.set(id, group);
    this.scene.add(group);
    return group;
  }

  private updateUsPlane(model: SceneModel): void {
    const frame = model.video.get(1);
    const probe = model.bodies.get(BODY_PROBE);
    if (!frame || !probe) {
      this.usGroup.visible = false;
      return;
    }
    const spacing = model.usPlane?.pixel_spacing ?? 0.0005;
    const wantSize: [number, number] = [frame.width, frame.height];
    if (!this.usMesh || this.usSize[0] !== wantSize[0] || this.usSize[1] !== wantSize[1]) {
      if (this.usMesh) this.usGroup.remove(this.usMesh);
      const w = frame.width * spacing;
      const h = frame.height * spacing;
      // image convention: x right, y down, pixel (u, v) at (u*s, v*s, 0)
      const geom = new THREE.BufferGeometry();
      geom.setAttribute("position", new THREE.BufferAttribute(new Float32Array([
        0, 0, 0, w, 0, 0, w, h, 0, 0, 0, 0, w, h, 0, 0, h, 0,
      ]), 3));
      geom.setAttribute("uv", new THREE.BufferAttribute(new Float32Array([
        0, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 1,
      ]), 2));
      geom.computeVertexNormals();
      this.usTexture = new THREE.DataTexture(
        gray8ToRgba(frame), frame.width, frame.height, THREE.RGBAFormat,
      );
      this.usTexture.flipY = false;
      this.usTexture.needsUpdate = true;
      this.usMesh = new THREE.Mesh(
        geom,
        new THREE.MeshBasicMaterial({
          map: this.usTexture, side: THREE.DoubleSide, transparent: true, opacity: 0.95,
        }),
      );
      this.usGroup.add(this.usMesh);
      this.usSize = wantSize;
    } else if (model.videoDirty.has(1) && this.usTexture) {
      (this.usTexture.image.data as Uint8Array).set(gray8ToRgba(frame));
      this.usTexture.needsUpdate = true;
    }
    model.videoDirty.delete(1);

    // plane sits at probe_pose ∘ image_to_probe
    this.usGroup.position.copy(vec(probe.position));
    this.usGroup.quaternion.copy(quat(probe.quaternion));
    if (this.usMesh && model.usPlane) {
      this.usMesh.position.copy(vec(model.usPlane.position));
      this.usMesh.quaternion.copy(quat(model.usPlane.quaternion));
    }
    this.usGroup.visible = true;
  }

  render(model: SceneModel, nowSeconds: number): void {
    for (const [id, body] of model.bodies) {
      const mesh = this.bodyMesh(id);
      mesh.position.copy(vec(body.position));
      mesh.quaternion.copy(quat(body.quaternion));
      const stale = nowSeconds - body.lastSeen > STALE_AFTER_S;
      mesh.traverse((child) => {
        const mat = (child as THREE.Mesh).material as THREE.Material | undefined;
        if (mat) mat.opacity = stale ? 0.25 : 1.0;
      });
    }

    if (model.plan) {
      const positions = this.planLine.geometry.getAttribute("position");
      positions.setXYZ(0, ...model.plan.entry);
      positions.setXYZ(1, ...model.plan.target);
      positions.needsUpdate = true;
      this.planLine.visible = true;
    } else {
      this.planLine.visible = false;
    }

    // actual needle from its body pose plus tip/axis calibration
    const needleBody = model.bodies.get(BODY_NEEDLE);
    const calib = model.needleCalib;
    if (needleBody && calib.tip_offset && calib.axis_dir) {
      const q = quat(needleBody.quaternion);
      const tip = vec(calib.tip_offset).applyQuaternion(q).add(vec(needleBody.position));
      const axis = vec(calib.axis_dir).applyQuaternion(q).normalize();
      const handle = tip.clone().addScaledVector(axis, -NEEDLE_DRAW_LENGTH);
      const positions = this.needleLine.geometry.getAttribute("position");
      positions.setXYZ(0, handle.x, handle.y, handle.z);
      positions.setXYZ(1, tip.x, tip.y, tip.z);
      positions.needsUpdate = true;
      this.needleLine.visible = true;
    } else {
      this.needleLine.visible = false;
    }

    // guides only once a plan and guidance exist
    const g = model.guidance;
    if (g && model.plan) {
      const positions = this.triangle.geometry.getAttribute("position");
      g.triangle.forEach((v, i) => positions.setXYZ(i, ...v));
      positions.needsUpdate = true;
      this.triangle.geometry.computeVertexNormals();
      this.triangle.visible = true;

      const magnified = vec(g.lateral_offset).multiplyScalar(this.magnification);
      const len = magnified.length();
      if (len > 1e-6) {
        this.magArrow.position.copy(vec(g.triangle[1])); // foot on the planned line
        this.magArrow.setDirection(magnified.clone().normalize());
        this.magArrow.setLength(len, Math.min(0.01, 0.3 * len), Math.min(0.006, 0.2 * len));
        this.magArrow.visible = true;
      } else {
        this.magArrow.visible = false;
      }
    } else {
      this.triangle.visible = false;
      this.magArrow.visible = false;
    }

    this.updateUsPlane(model);
    this.renderer.render(this.scene, this.camera);
  }
}
