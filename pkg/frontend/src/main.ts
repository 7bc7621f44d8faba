// DOM glue: wires the controller, renderer and input widgets together.

import { ApiClient } from "./api.js";
import { type OrbitPose } from "./camera.js";
import { AppController } from "./controller.js";
import { CanvasRenderer } from "./renderer.js";
import { sceneBounds } from "./splats.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? `http://${window.location.hostname}:7331`;

const canvas = document.getElementById("viewport") as HTMLCanvasElement;
const promptInput = document.getElementById("prompt") as HTMLInputElement;
const previewButton = document.getElementById("preview-btn") as HTMLButtonElement;
const confirmButton = document.getElementById("confirm-btn") as HTMLButtonElement;
const cancelButton = document.getElementById("cancel-btn") as HTMLButtonElement;
const undoButton = document.getElementById("undo-btn") as HTMLButtonElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const statusLine = document.getElementById("status") as HTMLDivElement;
const historyList = document.getElementById("history") as HTMLUListElement;
const candidatesList = document.getElementById("candidates") as HTMLUListElement;

const renderer = new CanvasRenderer(canvas);
const pose: OrbitPose = { azimuth: 225, elevation: 35, distance: 10, target: [0, 0, 0] };

const controller = new AppController(new ApiClient(baseUrl), {
  onChange: sync,
  onError: (message, stage) => showBanner(`[${stage}] ${message}`),
});

function showBanner(text: string): void {
  banner.textContent = text;
  banner.style.display = "block";
}

function hideBanner(): void {
  banner.style.display = "none";
}

function redraw(): void {
  if (!controller.splats) return;
  renderer.draw(controller.splats, {
    pose,
    highlight: controller.preview ? controller.highlightIndices() : null,
    roi: controller.preview?.roi ?? null,
  });
}

function sync(): void {
  previewButton.disabled = !controller.canSubmit;
  confirmButton.disabled = !controller.canConfirm;
  cancelButton.disabled = controller.phase !== "preview";
  undoButton.disabled = !controller.canUndo;
  statusLine.textContent = controller.meta
    ? `${controller.meta.splat_count.toLocaleString()} splats | ` +
      `${controller.meta.instances.length} instances | phase: ${controller.phase}`
    : `phase: ${controller.phase}`;

  historyList.replaceChildren(
    ...controller.history.map((entry) => {
      const li = document.createElement("li");
      li.textContent = `#${entry.journal_id} ${entry.op}: ${entry.prompt ?? ""}`;
      return li;
    }),
  );
  candidatesList.replaceChildren(
    ...(controller.preview?.ranked ?? []).map((candidate) => {
      const li = document.createElement("li");
      const score = candidate.score === null ? "-" : candidate.score.toFixed(3);
      li.textContent = `${candidate.class} #${candidate.id} (score ${score})`;
      if (candidate.id === controller.preview?.winner.id) li.classList.add("winner");
      return li;
    }),
  );
  redraw();
}

previewButton.addEventListener("click", () => {
  hideBanner();
  controller.submitPrompt(promptInput.value).catch(() => undefined);
});
confirmButton.addEventListener("click", () => {
  hideBanner();
  controller.confirmEdit().catch(() => undefined);
});
cancelButton.addEventListener("click", () => controller.cancelPreview());
undoButton.addEventListener("click", () => {
  hideBanner();
  controller.undoLast().catch(() => undefined);
});
promptInput.addEventListener("keydown", (e) => {
  if (e.key === "Enter" && !previewButton.disabled) previewButton.click();
});

// orbit / zoom
let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("pointerdown", (e) => {
  dragging = true;
  lastX = e.clientX;
  lastY = e.clientY;
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointermove", (e) => {
  if (!dragging) return;
  pose.azimuth -= (e.clientX - lastX) * 0.4;
  pose.elevation = Math.max(-89, Math.min(89, pose.elevation + (e.clientY - lastY) * 0.4));
  lastX = e.clientX;
  lastY = e.clientY;
  redraw();
});
canvas.addEventListener("pointerup", () => (dragging = false));
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  pose.distance = Math.max(0.5, pose.distance * (e.deltaY > 0 ? 1.1 : 0.9));
  redraw();
});

function fitView(): void {
  if (!controller.splats) return;
  const bounds = sceneBounds(controller.splats.positions);
  pose.target = [
    (bounds.min[0] + bounds.max[0]) / 2,
    (bounds.min[1] + bounds.max[1]) / 2,
    (bounds.min[2] + bounds.max[2]) / 2,
  ];
  const spans = [
    bounds.max[0] - bounds.min[0],
    bounds.max[1] - bounds.min[1],
    bounds.max[2] - bounds.min[2],
  ];
  pose.distance = Math.max(...spans, 1) * 0.65;
}

function resize(): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  redraw();
}
window.addEventListener("resize", resize);

resize();
controller
  .loadScene()
  .then(() => {
    fitView();
    redraw();
  })
  .catch(() => showBanner(`cannot load scene from ${baseUrl} - is 'splatedit serve' running?`));
