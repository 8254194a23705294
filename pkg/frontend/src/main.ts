import { OperatorInput } from "./input";
import { Session } from "./net";
import { SceneModel, SceneRenderer } from "./scene";

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function formatMm(meters: number): string {
  return (meters * 1e3).toFixed(2);
}

function main(): void {
  const params = new URLSearchParams(location.search);
  const url =
    params.get("ws") ?? `ws://${location.hostname || "127.0.0.1"}:9751`;

  const model = new SceneModel();
  const container = el<HTMLDivElement>("scene");
  const renderer = new SceneRenderer(container);
  const session = new Session(url, model);
  const input = new OperatorInput(session, renderer);
  input.attach(renderer.domElement);
  session.connect();

  el<HTMLButtonElement>("place-plan").addEventListener("click", () =>
    input.beginPlanPlacement(),
  );
  const magSlider = el<HTMLInputElement>("magnification");
  const magValue = el<HTMLSpanElement>("magnification-value");
  magSlider.addEventListener("input", () => {
    renderer.magnification = Number(magSlider.value);
    magValue.textContent = `${magSlider.value}x`;
  });
  input.onStatus = (text) => {
    el<HTMLSpanElement>("hint").textContent = text;
  };

  window.addEventListener("resize", () =>
    renderer.resize(container.clientWidth, container.clientHeight),
  );

  const statusEl = el<HTMLSpanElement>("connection");
  const readouts = {
    progress: el<HTMLSpanElement>("progress"),
    lateral: el<HTMLSpanElement>("lateral"),
    magnified: el<HTMLSpanElement>("magnified"),
    angle: el<HTMLSpanElement>("angle"),
    status: el<HTMLSpanElement>("guidance-status"),
    lost: el<HTMLSpanElement>("lost-bodies"),
    error: el<HTMLSpanElement>("last-error"),
  };

  function tick(): void {
    const now = performance.now() / 1000;

    statusEl.textContent =
      model.connection === "connected"
        ? "connected"
        : `${model.connection} (attempt ${model.reconnectAttempts})`;
    statusEl.className = model.connection;

    const g = model.guidance;
    if (g && model.plan) {
      readouts.progress.textContent = `${(g.progress * 100).toFixed(1)} %`;
      readouts.lateral.textContent = `${formatMm(g.lateral_magnitude)} mm`;
      readouts.magnified.textContent = `${formatMm(
        g.lateral_magnitude * renderer.magnification,
      )} mm`;
      readouts.angle.textContent = `${g.angle_offset_deg.toFixed(2)} deg`;
      readouts.status.textContent = g.status.replace("_", " ");
      readouts.status.className = `badge ${g.status}`;
    } else {
      readouts.progress.textContent = "-";
      readouts.lateral.textContent = "-";
      readouts.magnified.textContent = "-";
      readouts.angle.textContent = "-";
      readouts.status.textContent = "no plan";
      readouts.status.className = "badge";
    }

    const stale = model.staleBodies(now);
    readouts.lost.textContent = stale.length ? `Lost: ${stale.join(", ")}` : "";
    readouts.error.textContent = model.lastError;

    renderer.render(model, now);
    requestAnimationFrame(tick);
  }

  requestAnimationFrame(tick);
}

main();
