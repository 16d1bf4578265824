/** The parameter lattice the whole tuner moves on. Kernel width runs
 * 0.1 to 2.4 in 0.1 strides, noise level 0 to 75 in strides of 5; the
 * sliders, the grid pager, and the degrade panel all snap to it, so
 * the UI can never send an off-lattice value. */

export const WIDTH_MIN = 0.1;
export const WIDTH_MAX = 2.4;
export const WIDTH_STEP = 0.1;
export const SIGMA_MIN = 0;
export const SIGMA_MAX = 75;
export const SIGMA_STEP = 5;

function steps(min: number, max: number, step: number): number[] {
  const n = Math.round((max - min) / step) + 1;
  const out = new Array<number>(n);
  for (let i = 0; i < n; i++) {
    out[i] = Math.round((min + i * step) * 1e6) / 1e6;
  }
  return out;
}

export const WIDTHS = steps(WIDTH_MIN, WIDTH_MAX, WIDTH_STEP);
export const SIGMAS = steps(SIGMA_MIN, SIGMA_MAX, SIGMA_STEP);

function snap(value: number, points: number[]): number {
  let best = points[0];
  for (const p of points) {
    if (Math.abs(p - value) < Math.abs(best - value)) best = p;
  }
  return best;
}

export function snapWidth(value: number): number {
  return snap(value, WIDTHS);
}

export function snapSigma(value: number): number {
  return snap(value, SIGMAS);
}

/** One page of the sweep: a rectangular sub-lattice of at most
 * `cap` points, expressed as inclusive ranges the /grid endpoint
 * accepts directly. */
export interface GridPage {
  widths: number[];
  sigmas: number[];
  index: number;
  pageCount: number;
}

/** Cut the full lattice into pages of whole width-columns so every
 * page is a rectangle: with 16 sigma levels and a cap of 64 that is
 * 4 widths per page, 6 pages over the 24 widths. A pinned sigma
 * (noise-free models) collapses the sweep to a single page. */
export function gridPages(
  widths: number[] = WIDTHS,
  sigmas: number[] = SIGMAS,
  cap = 64,
): GridPage[] {
  if (sigmas.length === 0 || widths.length === 0) return [];
  if (sigmas.length > cap) {
    throw new Error(`sigma axis alone exceeds the page cap of ${cap}`);
  }
  const perPage = Math.max(1, Math.floor(cap / sigmas.length));
  const pageCount = Math.ceil(widths.length / perPage);
  const pages: GridPage[] = [];
  for (let i = 0; i < pageCount; i++) {
    pages.push({
      widths: widths.slice(i * perPage, (i + 1) * perPage),
      sigmas,
      index: i,
      pageCount,
    });
  }
  return pages;
}

/** [start, stop, step] triple for a service range field. */
export function rangeOf(points: number[], step: number): [number, number, number] {
  return [points[0], points[points.length - 1], step];
}
