/** Small SVG string-building helpers shared by the figure renderers. */

export function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Pixel coordinates rounded to 1/100; full precision only matters upstream. */
export function fx(x: number): string {
  const r = Math.round(x * 100) / 100;
  return Object.is(r, -0) ? "0" : r.toString();
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    // degenerate domain: center the single value
    d0 -= 1;
    d1 += 1;
  }
  const k = (range[1] - range[0]) / (d1 - d0);
  const f = ((v: number) => range[0] + (v - d0) * k) as Scale;
  f.domain = [d0, d1];
  f.range = range;
  return f;
}

/** Round tick positions covering [lo, hi], step chosen from 1/2/5 decades. */
export function niceTicks(lo: number, hi: number, target = 5): number[] {
  if (lo === hi) return [lo];
  const span = hi - lo;
  const raw = span / Math.max(1, target);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + step * 1e-9; v += step) {
    // snap away float dust so labels stay short
    ticks.push(Math.round(v / step) * step);
  }
  return ticks;
}

export function tickLabel(v: number): string {
  if (Number.isInteger(v)) return v.toString();
  return parseFloat(v.toPrecision(6)).toString();
}

export function tag(
  name: string,
  attrs: Record<string, string | number>,
  body?: string,
): string {
  const parts = Object.entries(attrs).map(([k, v]) => `${k}="${typeof v === "number" ? fx(v) : esc(v)}"`);
  const open = parts.length ? `<${name} ${parts.join(" ")}` : `<${name}`;
  return body === undefined ? `${open}/>` : `${open}>${body}</${name}>`;
}

export function svgDoc(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">\n` +
    body +
    "\n</svg>\n"
  );
}
