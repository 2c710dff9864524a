import { describe, expect, it } from "vitest";
import { bandAcross, renderChart } from "../src/charts.js";

describe("bandAcross", () => {
  it("computes the per-day mean and one-deviation corridor", () => {
    const band = bandAcross([
      { label: "a", points: [[1, 10], [2, 20]] },
      { label: "b", points: [[1, 14], [2, 28]] },
    ]);
    expect(band.mean.points).toEqual([[1, 12], [2, 24]]);
    expect(band.upper).toEqual([[1, 14], [2, 28]]);
    expect(band.lower).toEqual([[1, 10], [2, 20]]);
  });

  it("keeps days sorted even when series interleave", () => {
    const band = bandAcross([
      { label: "a", points: [[3, 1], [1, 1]] },
      { label: "b", points: [[2, 3]] },
    ]);
    expect(band.mean.points.map(([x]) => x)).toEqual([1, 2, 3]);
  });
});

describe("renderChart", () => {
  it("emits one path per series plus the band polygon", () => {
    const svg = renderChart({
      series: [
        { label: "house 1", points: [[1, 40], [2, 55]] },
        { label: "house 2", points: [[1, 42], [2, 51]] },
      ],
      band: { upper: [[1, 43], [2, 56]], lower: [[1, 39], [2, 50]] },
    });
    expect(svg.tagName.toLowerCase()).toBe("svg");
    expect(svg.querySelectorAll(".chart-line")).toHaveLength(2);
    const band = svg.querySelector(".chart-band");
    expect(band?.getAttribute("d")).toMatch(/Z$/);
    const line = svg.querySelector('[data-series="house 2"]');
    expect(line?.getAttribute("d")).toMatch(/^M[\d.]+,[\d.]+ L[\d.]+,[\d.]+$/);
  });

  it("survives an empty series list", () => {
    const svg = renderChart({ series: [] });
    expect(svg.querySelectorAll(".chart-line")).toHaveLength(0);
  });
});
