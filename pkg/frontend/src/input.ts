/**
 * Operator input: keyboard needle nudges, click-to-place plan points, and
 * the magnification slider. Buttons and keys stand in for the voice and
 * gesture commands of a headset UI. All steering input is ignored (and
 * shown as ignored) while disconnected.
 */

import { Session } from "./net";
import { SceneRenderer } from "./scene";
import type { Vec3 } from "./protocol";

const STEP_M = 0.001;          // 1 mm
const FINE_STEP_M = 0.0001;    // 0.1 mm with shift
const STEP_RAD = Math.PI / 180;       // 1 degree
const FINE_STEP_RAD = STEP_RAD / 10;  // 0.1 degree with shift

type PlacePhase = "idle" | "entry" | "target";

export class OperatorInput {
  private placePhase: PlacePhase = "idle";
  private pendingEntry: Vec3 | null = null;
  private nextPlanId = 1;
  private dragging = false;
  private dragMoved = false;
  private lastPointer: [number, number] = [0, 0];

  onStatus: (text: string) => void = () => {};

  constructor(
    private session: Session,
    private renderer: SceneRenderer,
  ) {}

  beginPlanPlacement(): void {
    this.placePhase = "entry";
    this.onStatus("click the ground plane to set the ENTRY point");
  }

  attach(target: HTMLElement): void {
    window.addEventListener("keydown", (e) => this.onKey(e));
    target.addEventListener("pointerdown", (e) => {
      this.dragging = true;
      this.dragMoved = false;
      this.lastPointer = [e.clientX, e.clientY];
    });
    target.addEventListener("pointermove", (e) => {
      if (!this.dragging) return;
      const dx = e.clientX - this.lastPointer[0];
      const dy = e.clientY - this.lastPointer[1];
      if (Math.abs(dx) + Math.abs(dy) > 2) this.dragMoved = true;
      this.lastPointer = [e.clientX, e.clientY];
      if (this.dragMoved) this.renderer.orbitBy(dx, dy);
    });
    target.addEventListener("pointerup", (e) => {
      const wasClick = this.dragging && !this.dragMoved;
      this.dragging = false;
      if (wasClick) this.onClick(e.clientX, e.clientY);
    });
    target.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.renderer.zoomBy(e.deltaY > 0 ? 1.1 : 0.9);
    }, { passive: false });
  }

  private onClick(x: number, y: number): void {
    if (this.placePhase === "idle") return;
    if (!this.session.connected) {
      this.onStatus("not connected: plan input ignored");
      return;
    }
    const point = this.renderer.groundPoint(x, y);
    if (!point) return;
    if (this.placePhase === "entry") {
      this.pendingEntry = point;
      this.placePhase = "target";
      this.onStatus("entry set; click again to set the TARGET point");
      return;
    }
    const entry = this.pendingEntry!;
    this.session.send({
      type: "plan_update",
      plan_id: this.nextPlanId++,
      entry,
      target: point,
    });
    this.placePhase = "idle";
    this.pendingEntry = null;
    this.onStatus("plan sent");
  }

  private onKey(e: KeyboardEvent): void {
    const t = e.shiftKey ? FINE_STEP_M : STEP_M;
    const r = e.shiftKey ? FINE_STEP_RAD : STEP_RAD;
    const translations: Record<string, Vec3> = {
      ArrowLeft: [-t, 0, 0],
      ArrowRight: [t, 0, 0],
      ArrowUp: [0, 0, -t],
      ArrowDown: [0, 0, t],
      w: [0, t, 0],
      s: [0, -t, 0],
    };
    const rotations: Record<string, Vec3> = {
      a: [0, r, 0],
      d: [0, -r, 0],
      q: [r, 0, 0],
      e: [-r, 0, 0],
    };
    const key = e.key.length === 1 ? e.key.toLowerCase() : e.key;
    const delta = translations[key];
    const rot = rotations[key];
    if (!delta && !rot) return;
    e.preventDefault();
    const msg = delta
      ? { type: "sim_command" as const, kind: "nudge_translate" as const, delta }
      : { type: "sim_command" as const, kind: "nudge_rotate" as const, delta: rot! };
    if (!this.session.send(msg)) {
      this.onStatus("not connected: steering input ignored");
    }
  }
}
