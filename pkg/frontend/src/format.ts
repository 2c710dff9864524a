/** Display formatting only; every number arrives ready-made from the API. */

export const NA = "n/a";

function formatted(
  value: number | null | undefined,
  render: (v: number) => string,
): string {
  return value === null || value === undefined || Number.isNaN(value)
    ? NA
    : render(value);
}

export function degC(value: number | null | undefined): string {
  return formatted(value, (v) => `${v.toFixed(1)} °C`);
}

export function percent(value: number | null | undefined): string {
  return formatted(value, (v) => `${v.toFixed(1)} %`);
}

export function grams(value: number | null | undefined): string {
  return formatted(value, (v) => `${v.toFixed(0)} g`);
}

export function kgPerBird(value: number | null | undefined): string {
  return formatted(value, (v) => `${v.toFixed(3)} kg/bird`);
}

export function birdsPerArea(value: number | null | undefined): string {
  return formatted(value, (v) => `${v.toFixed(2)} bird/m²`);
}

export function birds(value: number | null | undefined): string {
  return formatted(value, (v) => `${Math.round(v)}`);
}

export function conversion(value: number | null | undefined): string {
  return formatted(value, (v) => v.toFixed(4));
}

/** Range triple like "21.0 / 23.5 / 26.0 °C" for min/avg/max displays. */
export function tripleDegC(
  min: number | null | undefined,
  avg: number | null | undefined,
  max: number | null | undefined,
): string {
  const bare = (v: number | null | undefined) =>
    formatted(v, (x) => x.toFixed(1));
  return `${bare(min)} / ${bare(avg)} / ${bare(max)} °C`;
}

export function triplePercent(
  min: number | null | undefined,
  avg: number | null | undefined,
  max: number | null | undefined,
): string {
  const bare = (v: number | null | undefined) =>
    formatted(v, (x) => x.toFixed(1));
  return `${bare(min)} / ${bare(avg)} / ${bare(max)} %`;
}
