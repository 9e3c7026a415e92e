// Pure mapping from engine values to screen coordinates. Kept DOM-free so
// the fixture tests can check every widget without a browser.

import { HrPoint } from "./model.js";
import { SessionConfigView } from "./protocol.js";

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface ChartLayout {
  bands: { zone: number; rect: Rect }[];
  targetBand: Rect;
  polyline: { x: number; y: number }[][];  // segments split at HR gaps
  hrMin: number;
  hrMax: number;
  tMin: number;
  tMax: number;
}

export function hrAxisRange(config: SessionConfigView): [number, number] {
  return [40, config.hr_max_bpm + 10];
}

function yFor(hr: number, lo: number, hi: number, height: number): number {
  return height * (1 - (hr - lo) / (hi - lo));
}

export function chartLayout(
  config: SessionConfigView,
  history: HrPoint[],
  targetZone: number,
  width: number,
  height: number,
  windowS = 120,
): ChartLayout {
  const [lo, hi] = hrAxisRange(config);
  const tMax = history.length ? history[history.length - 1].t : windowS;
  const tMin = Math.max(tMax - windowS, 0);
  const xFor = (t: number) => width * (t - tMin) / Math.max(tMax - tMin, 1e-9);

  const bands = [];
  for (let zone = 1; zone <= 5; zone++) {
    const yTop = yFor(config.zone_boundaries[zone], lo, hi, height);
    const yBot = yFor(config.zone_boundaries[zone - 1], lo, hi, height);
    bands.push({ zone, rect: { x: 0, y: yTop, w: width, h: yBot - yTop } });
  }
  const targetBand = bands[targetZone - 1].rect;

  const polyline: { x: number; y: number }[][] = [];
  let segment: { x: number; y: number }[] = [];
  for (const point of history) {
    if (point.hr === null || point.t < tMin) {
      if (segment.length) polyline.push(segment);
      segment = [];
      continue;
    }
    segment.push({ x: xFor(point.t), y: yFor(point.hr, lo, hi, height) });
  }
  if (segment.length) polyline.push(segment);

  return { bands, targetBand, polyline, hrMin: lo, hrMax: hi, tMin, tMax };
}

export interface LaneLayout {
  markerFrac: number;   // 0 = pacer fully behind, 1 = fully ahead
  greenFrac: [number, number];
  aligned: boolean;
}

export function laneLayout(
  offsetM: number,
  aligned: boolean,
  config: SessionConfigView,
): LaneLayout {
  const max = config.max_offset_m;
  const clamp = (v: number) => Math.min(Math.max(v, -max), max);
  const frac = (v: number) => (clamp(v) + max) / (2 * max);
  return {
    markerFrac: frac(offsetM),
    greenFrac: [frac(-config.green_radius_m), frac(config.green_radius_m)],
    aligned,
  };
}

export interface BikeWidgetLayout {
  hrText: string;
  heartZone: number | null;   // box carrying the heart marker
  targetZone: number;         // box carrying the green outline
  onTarget: boolean;
}

export function bikeWidgetLayout(
  hrBpm: number | null,
  currentZone: number | null,
  targetZone: number,
): BikeWidgetLayout {
  return {
    hrText: hrBpm === null ? "--" : String(Math.round(hrBpm)),
    heartZone: currentZone,
    targetZone,
    onTarget: currentZone !== null && currentZone === targetZone,
  };
}

export function speedKmh(speedMps: number): number {
  return speedMps * 3.6;
}
