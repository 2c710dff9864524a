/** Hand-rolled SVG line charts; no canvas, so they render under jsdom too. */

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Series {
  label: string;
  points: Array<[number, number]>;
}

export interface ChartSpec {
  width?: number;
  height?: number;
  series: Series[];
  /** Shaded mean-plus-deviation corridor drawn behind the lines. */
  band?: { upper: Array<[number, number]>; lower: Array<[number, number]> };
  yLabel?: string;
}

const PALETTE = ["#4e9a8f", "#c0692b", "#5b6ee1", "#a84a6e", "#777"];
const PAD = { left: 44, right: 10, top: 10, bottom: 22 };

interface Extent {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

function extentOf(spec: ChartSpec): Extent {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const s of spec.series) {
    for (const [x, y] of s.points) {
      xs.push(x);
      ys.push(y);
    }
  }
  if (spec.band) {
    for (const [x, y] of [...spec.band.upper, ...spec.band.lower]) {
      xs.push(x);
      ys.push(y);
    }
  }
  if (xs.length === 0) return { x0: 0, x1: 1, y0: 0, y1: 1 };
  const y0 = Math.min(...ys);
  const y1 = Math.max(...ys);
  const slack = y1 > y0 ? (y1 - y0) * 0.05 : Math.abs(y1) * 0.05 + 0.5;
  return {
    x0: Math.min(...xs),
    x1: Math.max(...xs),
    y0: y0 - slack,
    y1: y1 + slack,
  };
}

function el(name: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  return node;
}

/** Per-day arithmetic mean and a one-deviation corridor across series. */
export function bandAcross(
  seriesList: Series[],
): { mean: Series; upper: Array<[number, number]>; lower: Array<[number, number]> } {
  const byX = new Map<number, number[]>();
  for (const s of seriesList) {
    for (const [x, y] of s.points) {
      const bucket = byX.get(x);
      if (bucket) bucket.push(y);
      else byX.set(x, [y]);
    }
  }
  const xs = [...byX.keys()].sort((a, b) => a - b);
  const mean: Array<[number, number]> = [];
  const upper: Array<[number, number]> = [];
  const lower: Array<[number, number]> = [];
  for (const x of xs) {
    const ys = byX.get(x)!;
    const m = ys.reduce((a, b) => a + b, 0) / ys.length;
    const dev = Math.sqrt(
      ys.reduce((a, b) => a + (b - m) ** 2, 0) / ys.length,
    );
    mean.push([x, m]);
    upper.push([x, m + dev]);
    lower.push([x, m - dev]);
  }
  return { mean: { label: "mean", points: mean }, upper, lower };
}

export function renderChart(spec: ChartSpec): SVGSVGElement {
  const width = spec.width ?? 420;
  const height = spec.height ?? 160;
  const ext = extentOf(spec);
  const sx = (x: number) =>
    PAD.left +
    ((x - ext.x0) / Math.max(ext.x1 - ext.x0, 1e-9)) *
      (width - PAD.left - PAD.right);
  const sy = (y: number) =>
    height -
    PAD.bottom -
    ((y - ext.y0) / Math.max(ext.y1 - ext.y0, 1e-9)) *
      (height - PAD.top - PAD.bottom);
  const path = (points: Array<[number, number]>) =>
    points
      .map(([x, y], i) => `${i === 0 ? "M" : "L"}${sx(x).toFixed(1)},${sy(y).toFixed(1)}`)
      .join(" ");

  const svg = el("svg", {
    viewBox: `0 0 ${width} ${height}`,
    width: String(width),
    height: String(height),
    class: "chart",
    role: "img",
  }) as SVGSVGElement;

  if (spec.band && spec.band.upper.length > 1) {
    const ring = [...spec.band.upper, ...[...spec.band.lower].reverse()];
    svg.append(
      el("path", {
        d: path(ring) + " Z",
        class: "chart-band",
        fill: "#4e9a8f",
        "fill-opacity": "0.18",
        stroke: "none",
      }),
    );
  }
  spec.series.forEach((s, i) => {
    if (s.points.length === 0) return;
    svg.append(
      el("path", {
        d: path(s.points),
        class: "chart-line",
        "data-series": s.label,
        fill: "none",
        stroke: PALETTE[i % PALETTE.length]!,
        "stroke-width": "1.5",
      }),
    );
  });

  for (const y of [ext.y0, ext.y1]) {
    const tick = el("text", {
      x: "2",
      y: String(sy(y) + 4),
      class: "chart-tick",
      "font-size": "10",
    });
    tick.textContent = y.toFixed(1);
    svg.append(tick);
  }
  const xtick = el("text", {
    x: String(width - PAD.right),
    y: String(height - 6),
    "text-anchor": "end",
    class: "chart-tick",
    "font-size": "10",
  });
  xtick.textContent = `day ${ext.x1.toFixed(0)}`;
  svg.append(xtick);
  if (spec.yLabel) {
    const label = el("text", {
      x: String(PAD.left),
      y: String(PAD.top + 2),
      class: "chart-tick",
      "font-size": "10",
    });
    label.textContent = spec.yLabel;
    svg.append(label);
  }
  return svg;
}
