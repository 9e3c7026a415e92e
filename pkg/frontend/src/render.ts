// Drawing: applies the pure geometry to a canvas context and plain elements.
// Everything is injected through narrow interfaces so the fixture tests can
// run the full render path with recording stubs.

import { bikeWidgetLayout, chartLayout, laneLayout, speedKmh } from "./geometry.js";
import { ConsoleViewModel } from "./model.js";

export interface Drawable {
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
}

export interface StyleLike {
  display: string;
  left: string;
  width: string;
}

export interface ElementLike {
  textContent: string | null;
  style: StyleLike;
  classList: { toggle(name: string, on: boolean): void };
}

export interface ConsoleWidgets {
  chart: Drawable;
  chartWidth: number;
  chartHeight: number;
  laneMarker: ElementLike;
  laneGreen: ElementLike;
  bikeBoxes: ElementLike[];   // five zone boxes, index 0 = zone 1
  bikeHr: ElementLike;
  statusLine: ElementLike;
  endBanner: ElementLike;
  laneContainer: ElementLike;
  bikeContainer: ElementLike;
}

const ZONE_FILL = ["#dbeafe", "#bfdbfe", "#bbf7d0", "#fed7aa", "#fecaca"];

export function renderChart(vm: ConsoleViewModel, w: ConsoleWidgets): void {
  if (!vm.config || !vm.latest) return;
  const ctx = w.chart;
  const layout = chartLayout(vm.config, vm.history, vm.latest.target_zone,
                             w.chartWidth, w.chartHeight);
  ctx.clearRect(0, 0, w.chartWidth, w.chartHeight);
  ctx.globalAlpha = 1;
  for (const band of layout.bands) {
    ctx.fillStyle = ZONE_FILL[band.zone - 1];
    ctx.fillRect(band.rect.x, band.rect.y, band.rect.w, band.rect.h);
  }
  ctx.globalAlpha = 0.9;
  ctx.strokeStyle = "#16a34a";
  ctx.lineWidth = 2;
  ctx.strokeRect(layout.targetBand.x, layout.targetBand.y,
                 layout.targetBand.w, layout.targetBand.h);
  ctx.globalAlpha = 1;
  ctx.strokeStyle = "#1e3a8a";
  ctx.lineWidth = 1.5;
  for (const segment of layout.polyline) {
    if (segment.length < 2) continue;
    ctx.beginPath();
    ctx.moveTo(segment[0].x, segment[0].y);
    for (const point of segment.slice(1)) ctx.lineTo(point.x, point.y);
    ctx.stroke();
  }
  ctx.fillStyle = "#1e3a8a";
  ctx.font = "12px sans-serif";
  const hr = vm.latest.hr_bpm;
  ctx.fillText(hr === null ? "HR --" : `HR ${hr.toFixed(0)}`, 8, 14);
}

export function renderLane(vm: ConsoleViewModel, w: ConsoleWidgets): void {
  if (!vm.config || !vm.latest || !vm.latest.npc) return;
  const lane = laneLayout(vm.latest.npc.offset_m, vm.latest.npc.aligned,
                          vm.config);
  w.laneMarker.style.left = `${(lane.markerFrac * 100).toFixed(2)}%`;
  const [g0, g1] = lane.greenFrac;
  w.laneGreen.style.left = `${(g0 * 100).toFixed(2)}%`;
  w.laneGreen.style.width = `${((g1 - g0) * 100).toFixed(2)}%`;
  w.laneGreen.classList.toggle("faded", !lane.aligned);
}

export function renderBikeWidget(vm: ConsoleViewModel, w: ConsoleWidgets): void {
  if (!vm.latest || !vm.latest.bike_view) return;
  const view = vm.latest.bike_view;
  const layout = bikeWidgetLayout(view.hr_bpm, view.current_zone,
                                  view.target_zone);
  w.bikeHr.textContent = layout.hrText;
  w.bikeBoxes.forEach((box, i) => {
    const zone = i + 1;
    box.classList.toggle("heart", layout.heartZone === zone);
    box.classList.toggle("target", layout.targetZone === zone);
  });
}

export function renderFrame(vm: ConsoleViewModel, w: ConsoleWidgets): void {
  const latest = vm.latest;
  const hasNpc = latest?.npc != null;
  w.laneContainer.style.display = hasNpc ? "" : "none";
  w.bikeContainer.style.display = latest?.bike_view != null ? "" : "none";
  if (hasNpc) renderLane(vm, w);
  if (latest?.bike_view != null) renderBikeWidget(vm, w);
  renderChart(vm, w);
  if (latest) {
    const score = latest.npc === null ? "" : `  score ${latest.npc.score}`;
    const drops = vm.droppedTotal ? `  dropped ${vm.droppedTotal}` : "";
    w.statusLine.textContent =
      `${latest.phase}  t=${latest.t_s.toFixed(1)}s  ` +
      `remaining ${latest.remaining_s.toFixed(0)}s  ` +
      `${speedKmh(latest.speed_mps).toFixed(1)} km/h${score}${drops}`;
  }
  w.endBanner.style.display = vm.endPromptSeen ? "" : "none";
}
