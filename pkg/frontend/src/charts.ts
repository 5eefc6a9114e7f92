// Minimal SVG series charts; values are rendered as-is (no aggregation).

export type Point = { x: number; y: number };

export function lineChart(points: Point[], width = 520, height = 160,
                          label = ""): string {
  if (points.length === 0) {
    return `<svg class="chart" width="${width}" height="${height}"><text x="8" y="20">no data</text></svg>`;
  }
  const xs = points.map(p => p.x);
  const ys = points.map(p => p.y);
  const xMin = Math.min(...xs), xMax = Math.max(...xs);
  const yMin = Math.min(0, ...ys), yMax = Math.max(...ys, 1e-12);
  const sx = (x: number) =>
    xMax === xMin ? width / 2 : 30 + (x - xMin) / (xMax - xMin) * (width - 40);
  const sy = (y: number) =>
    height - 20 - (y - yMin) / (yMax - yMin) * (height - 35);
  const path = points
    .map((p, i) => `${i === 0 ? "M" : "L"}${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`)
    .join(" ");
  return [
    `<svg class="chart" width="${width}" height="${height}" role="img" aria-label="${label}">`,
    `<text x="8" y="14" class="chart-label">${label}</text>`,
    `<line x1="30" y1="${sy(0)}" x2="${width - 10}" y2="${sy(0)}" class="axis"/>`,
    `<path d="${path}" fill="none" class="series"/>`,
    `</svg>`,
  ].join("");
}

export function barChart(points: Point[], width = 520, height = 160,
                         label = ""): string {
  if (points.length === 0) {
    return `<svg class="chart" width="${width}" height="${height}"><text x="8" y="20">no data</text></svg>`;
  }
  const yMax = Math.max(...points.map(p => p.y), 1e-12);
  const bw = Math.max(2, (width - 40) / points.length - 2);
  const bars = points.map((p, i) => {
    const h = (p.y / yMax) * (height - 40);
    const x = 30 + i * ((width - 40) / points.length);
    return `<rect x="${x.toFixed(1)}" y="${(height - 20 - h).toFixed(1)}" width="${bw.toFixed(1)}" height="${h.toFixed(1)}" class="bar" data-x="${p.x}" data-y="${p.y}"/>`;
  });
  return [
    `<svg class="chart" width="${width}" height="${height}" role="img" aria-label="${label}">`,
    `<text x="8" y="14" class="chart-label">${label}</text>`,
    ...bars,
    `</svg>`,
  ].join("");
}
