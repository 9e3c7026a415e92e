// Entry point: wires the link, view model, operator controls, and the
// render loop together. A single render loop consumes whatever frames the
// network callbacks have enqueued; no callback touches the DOM directly.

import { RateLimiter } from "./debounce.js";
import { ConsoleViewModel } from "./model.js";
import { EngineLink } from "./net.js";
import { Frame, cmdFrame, effortFrame, helloFrame } from "./protocol.js";
import { ConsoleWidgets, renderFrame } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function widgets(): ConsoleWidgets {
  const canvas = el<HTMLCanvasElement>("hr-chart");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const boxes = Array.from({ length: 5 }, (_, i) =>
    el<HTMLDivElement>(`bike-box-${i + 1}`));
  return {
    chart: ctx,
    chartWidth: canvas.width,
    chartHeight: canvas.height,
    laneMarker: el("lane-marker"),
    laneGreen: el("lane-green"),
    bikeBoxes: boxes,
    bikeHr: el("bike-hr"),
    statusLine: el("status-line"),
    endBanner: el("end-banner"),
    laneContainer: el("lane"),
    bikeContainer: el("bike-widget"),
  };
}

function main(): void {
  const vm = new ConsoleViewModel();
  const w = widgets();
  const queue: Frame[] = [];
  const banner = el("connection-banner");

  const url = `ws://${location.host || "127.0.0.1:8766"}/ws`;
  const link = new EngineLink(url, {
    onFrame: (frame) => queue.push(frame),
    onStatus: (status) => {
      vm.status = status;
      banner.textContent = status === "open" ? "" : `connection: ${status}`;
      banner.style.display = status === "open" ? "none" : "";
      if (status === "open") link.send(helloFrame("console"));
    },
  });
  link.connect();

  const effortValue = el<HTMLSpanElement>("effort-value");
  const limiter = new RateLimiter<number>((power) => {
    link.send(effortFrame(power));
  }, 10);
  const slider = el<HTMLInputElement>("effort-slider");
  slider.addEventListener("input", () => {
    const power = vm.setSlider(Number(slider.value));
    effortValue.textContent = `${power.toFixed(0)} W`;
    limiter.push(power);
  });

  const ageInput = el<HTMLInputElement>("age-input");
  const conditionSelect = el<HTMLSelectElement>("condition-select");
  const participantInput = el<HTMLInputElement>("participant-input");
  el("start-button").addEventListener("click", () => {
    link.send(cmdFrame("start", {
      age: Number(ageInput.value),
      condition: conditionSelect.value,
      participant_id: participantInput.value || "console",
    }));
  });
  el("stop-button").addEventListener("click", () => {
    link.send(cmdFrame("stop"));
  });

  const toastBox = el("toasts");
  let shownToasts = 0;

  function renderLoop(): void {
    while (queue.length) {
      vm.applyFrame(queue.shift()!);
    }
    renderFrame(vm, w);
    slider.max = String(vm.config ? vm.config.p_max_w : 400);
    if (vm.lastAckedPowerW !== null) {
      el("effort-acked").textContent = `acked ${vm.lastAckedPowerW.toFixed(0)} W`;
    }
    const running = vm.running;
    (el<HTMLButtonElement>("start-button")).disabled = running;
    ageInput.disabled = running;
    conditionSelect.disabled = running;
    while (shownToasts < vm.toasts.length) {
      const toast = vm.toasts[shownToasts++];
      const node = document.createElement("div");
      node.className = "toast";
      node.textContent = `${toast.code}: ${toast.message}`;
      toastBox.appendChild(node);
      setTimeout(() => node.remove(), 4000);
    }
    requestAnimationFrame(renderLoop);
  }
  requestAnimationFrame(renderLoop);
}

main();
