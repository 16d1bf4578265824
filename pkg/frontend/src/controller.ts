import {
  fetchModels,
  postDegrade,
  postGrid,
  postSr,
  type GridCell,
  type ModelEntry,
  ServiceError,
} from "./api.js";
import {
  gridPages,
  rangeOf,
  SIGMA_STEP,
  snapSigma,
  snapWidth,
  WIDTH_STEP,
  type GridPage,
} from "./lattice.js";
import {
  canvasDecoder,
  pngDimsFromBase64,
  psnr,
  type Dims,
  type PixelDecoder,
} from "./pixels.js";

export interface HistoryEntry {
  width: number;
  sigma: number;
  modelId: string;
  image: string;
  ms: number;
  psnr: number | null;
}

export interface SrResult extends HistoryEntry {
  dims: Dims;
}

export interface TunerState {
  baseUrl: string;
  models: ModelEntry[];
  modelId: string | null;
  width: number;
  sigma: number;
  /** Base64 LR input the model sees. */
  sourceImage: string | null;
  sourceDims: Dims | null;
  /** Ground-truth HR kept when the source was synthesized through
   * /degrade; enables the PSNR readout. Null for real images. */
  hrImage: string | null;
  result: SrResult | null;
  history: HistoryEntry[];
  compare: (HistoryEntry | null)[];
  gridCells: GridCell[];
  gridPage: number;
  gridPageCount: number;
  busy: boolean;
  error: string | null;
}

type Listener = (state: TunerState) => void;

function cacheKey(
  modelId: string,
  width: number,
  sigma: number,
  image: string,
): string {
  return `${modelId}|${width}|${sigma}|${image.length}:${image.slice(0, 64)}:${image.slice(-64)}`;
}

/** Owns all tuner state and talks to the service. Slider moves call
 * setWidth/setSigma which snap to the lattice and re-run; responses
 * that were superseded by a newer run are dropped, so at most one
 * request's result ever lands. */
export class TunerController {
  state: TunerState;

  private listeners: Listener[] = [];
  private srEpoch = 0;
  private srAbort: AbortController | null = null;
  private cache = new Map<string, { image: string; ms: number }>();
  private decoder: PixelDecoder;

  constructor(baseUrl: string, decoder: PixelDecoder = canvasDecoder) {
    this.decoder = decoder;
    this.state = {
      baseUrl,
      models: [],
      modelId: null,
      width: 1.3,
      sigma: 15,
      sourceImage: null,
      sourceDims: null,
      hrImage: null,
      result: null,
      history: [],
      compare: [null, null],
      gridCells: [],
      gridPage: 0,
      gridPageCount: 0,
      busy: false,
      error: null,
    };
  }

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  private fail(err: unknown): void {
    this.state.error =
      err instanceof ServiceError
        ? err.message
        : err instanceof Error
          ? `service unreachable: ${err.message}`
          : String(err);
    this.state.busy = false;
    this.emit();
  }

  currentModel(): ModelEntry | null {
    return this.state.models.find((m) => m.id === this.state.modelId) ?? null;
  }

  /** Noise-free variants have no noise input; sigma is pinned to 0. */
  sigmaLocked(): boolean {
    return this.currentModel()?.variant === "srmdnf";
  }

  async loadModels(): Promise<void> {
    try {
      this.state.models = await fetchModels(this.state.baseUrl);
      if (this.state.models.length > 0 && this.state.modelId === null) {
        this.selectModel(this.state.models[0].id);
        return;
      }
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  setBaseUrl(url: string): void {
    this.state.baseUrl = url.replace(/\/+$/, "");
    this.state.models = [];
    this.state.modelId = null;
    this.cache.clear();
    void this.loadModels();
  }

  selectModel(id: string): void {
    this.state.modelId = id;
    if (this.sigmaLocked()) this.state.sigma = 0;
    this.state.gridCells = [];
    this.state.gridPageCount = 0;
    this.emit();
    void this.runSr();
  }

  setWidth(value: number): void {
    this.state.width = snapWidth(value);
    this.emit();
    void this.runSr();
  }

  setSigma(value: number): void {
    this.state.sigma = this.sigmaLocked() ? 0 : snapSigma(value);
    this.emit();
    void this.runSr();
  }

  setSource(image: string, hrImage: string | null): void {
    this.state.sourceImage = image;
    this.state.sourceDims = pngDimsFromBase64(image);
    this.state.hrImage = hrImage;
    this.state.result = null;
    this.state.gridCells = [];
    this.state.gridPageCount = 0;
    this.emit();
    void this.runSr();
  }

  /** Run the current (model, width, sigma) on the source. Newest wins:
   * a newer call aborts this one, and a response arriving for an
   * outdated epoch is discarded unrendered. */
  async runSr(): Promise<void> {
    const { baseUrl, modelId, sourceImage, width, sigma } = this.state;
    if (modelId === null || sourceImage === null) return;
    const epoch = ++this.srEpoch;
    this.srAbort?.abort();
    const abort = new AbortController();
    this.srAbort = abort;
    this.state.error = null;
    this.state.busy = true;
    this.emit();

    const key = cacheKey(modelId, width, sigma, sourceImage);
    let image: string;
    let ms: number;
    const cached = this.cache.get(key);
    if (cached) {
      ({ image, ms } = cached);
    } else {
      try {
        ({ image, ms } = await postSr(
          baseUrl,
          { model_id: modelId, image: sourceImage, width, sigma },
          abort.signal,
        ));
      } catch (err) {
        if (epoch === this.srEpoch) this.fail(err);
        return;
      }
      if (epoch !== this.srEpoch) return;
      this.cache.set(key, { image, ms });
    }
    if (epoch !== this.srEpoch) return;

    let quality: number | null = null;
    if (this.state.hrImage !== null) {
      const [got, want] = await Promise.all([
        this.decoder(image),
        this.decoder(this.state.hrImage),
      ]);
      if (epoch !== this.srEpoch) return;
      if (got && want && got.width === want.width && got.height === want.height) {
        quality = psnr(want, got);
      }
    }

    const entry: HistoryEntry = {
      width,
      sigma,
      modelId,
      image,
      ms,
      psnr: quality,
    };
    this.state.result = { ...entry, dims: pngDimsFromBase64(image) };
    this.state.history.push(entry);
    this.state.busy = false;
    this.emit();
  }

  /** Synthesize a degraded source from an HR upload and keep the HR
   * around so later results get a PSNR readout. */
  async degradeToSource(
    hrImage: string,
    params: { width: number; sigma: number; scale: number; seed: number },
  ): Promise<void> {
    this.state.error = null;
    this.state.busy = true;
    this.emit();
    try {
      const out = await postDegrade(this.state.baseUrl, {
        image: hrImage,
        width: snapWidth(params.width),
        sigma: snapSigma(params.sigma),
        scale: params.scale,
        seed: params.seed,
      });
      this.state.busy = false;
      this.setSource(out.image, hrImage);
    } catch (err) {
      this.fail(err);
    }
  }

  pages(): GridPage[] {
    const model = this.currentModel();
    const sigmas = model?.variant === "srmdnf" ? [0] : undefined;
    return gridPages(undefined, sigmas);
  }

  /** Fetch one page of the sweep, at most 64 lattice points. */
  async runGridPage(index: number): Promise<void> {
    const { baseUrl, modelId, sourceImage } = this.state;
    if (modelId === null || sourceImage === null) return;
    const pages = this.pages();
    if (index < 0 || index >= pages.length) return;
    const page = pages[index];
    this.state.error = null;
    this.state.busy = true;
    this.emit();
    try {
      const out = await postGrid(baseUrl, {
        model_id: modelId,
        image: sourceImage,
        width_range: rangeOf(page.widths, WIDTH_STEP),
        sigma_range: rangeOf(page.sigmas, SIGMA_STEP),
        thumb: 96,
      });
      this.state.gridCells = out.results;
      this.state.gridPage = index;
      this.state.gridPageCount = page.pageCount;
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Grid thumbnail click: snap the sliders to that lattice point. */
  pickGridCell(cell: { width: number; sigma: number }): void {
    this.state.width = snapWidth(cell.width);
    this.state.sigma = this.sigmaLocked() ? 0 : snapSigma(cell.sigma);
    this.emit();
    void this.runSr();
  }

  /** Pin a history entry into one of the two compare slots. */
  pinCompare(entry: HistoryEntry, slot: 0 | 1): void {
    this.state.compare[slot] = entry;
    this.emit();
  }
}
