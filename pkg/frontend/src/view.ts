import { type TunerController, type HistoryEntry } from "./controller.js";
import {
  SIGMA_MAX,
  SIGMA_MIN,
  SIGMA_STEP,
  WIDTH_MAX,
  WIDTH_MIN,
  WIDTH_STEP,
} from "./lattice.js";

function dataUrl(b64: string): string {
  return "data:image/png;base64," + b64;
}

function entryLabel(e: HistoryEntry): string {
  return `w ${e.width.toFixed(1)}  σ ${e.sigma}`;
}

/** Build the whole app under `root` and keep it in sync with the
 * controller. All updates are imperative: query once, patch on each
 * state change. */
export function createApp(root: HTMLElement, ctl: TunerController): void {
  root.innerHTML = `
    <header class="bar">
      <h1>degradation tuner</h1>
      <label>service <input id="base-url" size="28" /></label>
      <label>model <select id="model-select"></select></label>
      <span id="busy" class="busy" hidden>working…</span>
    </header>
    <div id="error-banner" class="banner" hidden></div>
    <main>
      <section class="panel" id="source-panel">
        <h2>input</h2>
        <label class="file">low-res PNG <input type="file" id="lr-file" accept="image/png" /></label>
        <details id="synth">
          <summary>or synthesize from a high-res PNG</summary>
          <label class="file">high-res PNG <input type="file" id="hr-file" accept="image/png" /></label>
          <label>scale <select id="synth-scale">
            <option>2</option><option>3</option><option>4</option>
          </select></label>
          <label>seed <input type="number" id="synth-seed" value="0" /></label>
          <button id="synth-run" disabled>degrade → use as input</button>
        </details>
        <figure>
          <img id="source-img" alt="" />
          <figcaption id="source-caption"></figcaption>
        </figure>
      </section>
      <section class="panel" id="tune-panel">
        <h2>degradation parameters</h2>
        <label class="slider">kernel width
          <input type="range" id="width-slider"
                 min="${WIDTH_MIN}" max="${WIDTH_MAX}" step="${WIDTH_STEP}" />
          <output id="width-value"></output>
        </label>
        <label class="slider">noise level
          <input type="range" id="sigma-slider"
                 min="${SIGMA_MIN}" max="${SIGMA_MAX}" step="${SIGMA_STEP}" />
          <output id="sigma-value"></output>
        </label>
        <figure>
          <img id="result-img" alt="" />
          <figcaption>
            <span id="result-caption"></span>
            <span id="result-psnr" hidden></span>
          </figcaption>
        </figure>
        <div class="zoom">
          zoom
          <button data-zoom="1">1×</button>
          <button data-zoom="2">2×</button>
          <button data-zoom="4">4×</button>
        </div>
      </section>
      <section class="panel" id="history-panel">
        <h2>history</h2>
        <ol id="history-list"></ol>
        <h2>compare</h2>
        <div id="compare-row">
          <figure><img id="compare-0" alt="" /><figcaption id="compare-0-cap"></figcaption></figure>
          <figure><img id="compare-1" alt="" /><figcaption id="compare-1-cap"></figcaption></figure>
        </div>
      </section>
    </main>
    <section class="panel" id="grid-panel">
      <h2>parameter sweep</h2>
      <div class="pager">
        <button id="grid-prev" disabled>◀</button>
        <span id="grid-page-label">page –</span>
        <button id="grid-next" disabled>▶</button>
        <button id="grid-run">sweep this page</button>
      </div>
      <div id="grid-cells"></div>
    </section>
  `;

  const $ = <T extends HTMLElement>(sel: string) =>
    root.querySelector<T>(sel)!;

  const baseUrl = $<HTMLInputElement>("#base-url");
  const modelSelect = $<HTMLSelectElement>("#model-select");
  const busy = $("#busy");
  const banner = $("#error-banner");
  const lrFile = $<HTMLInputElement>("#lr-file");
  const hrFile = $<HTMLInputElement>("#hr-file");
  const synthScale = $<HTMLSelectElement>("#synth-scale");
  const synthSeed = $<HTMLInputElement>("#synth-seed");
  const synthRun = $<HTMLButtonElement>("#synth-run");
  const sourceImg = $<HTMLImageElement>("#source-img");
  const sourceCaption = $("#source-caption");
  const widthSlider = $<HTMLInputElement>("#width-slider");
  const widthValue = $<HTMLOutputElement>("#width-value");
  const sigmaSlider = $<HTMLInputElement>("#sigma-slider");
  const sigmaValue = $<HTMLOutputElement>("#sigma-value");
  const resultImg = $<HTMLImageElement>("#result-img");
  const resultCaption = $("#result-caption");
  const resultPsnr = $("#result-psnr");
  const historyList = $("#history-list");
  const gridPrev = $<HTMLButtonElement>("#grid-prev");
  const gridNext = $<HTMLButtonElement>("#grid-next");
  const gridRun = $<HTMLButtonElement>("#grid-run");
  const gridPageLabel = $("#grid-page-label");
  const gridCells = $("#grid-cells");

  let zoom = 1;
  let hrUpload: string | null = null;
  let wantPage = 0;

  baseUrl.value = ctl.state.baseUrl;
  baseUrl.addEventListener("change", () => ctl.setBaseUrl(baseUrl.value));

  modelSelect.addEventListener("change", () =>
    ctl.selectModel(modelSelect.value),
  );
  widthSlider.addEventListener("input", () =>
    ctl.setWidth(Number(widthSlider.value)),
  );
  sigmaSlider.addEventListener("input", () =>
    ctl.setSigma(Number(sigmaSlider.value)),
  );

  function readFile(input: HTMLInputElement): Promise<string | null> {
    const file = input.files?.[0];
    if (!file) return Promise.resolve(null);
    return new Promise((resolve) => {
      const reader = new FileReader();
      reader.onload = () => {
        const url = String(reader.result);
        resolve(url.slice(url.indexOf(",") + 1));
      };
      reader.onerror = () => resolve(null);
      reader.readAsDataURL(file);
    });
  }

  lrFile.addEventListener("change", async () => {
    const image = await readFile(lrFile);
    if (image) ctl.setSource(image, null);
  });
  hrFile.addEventListener("change", async () => {
    hrUpload = await readFile(hrFile);
    synthRun.disabled = hrUpload === null;
  });
  synthRun.addEventListener("click", () => {
    if (!hrUpload) return;
    void ctl.degradeToSource(hrUpload, {
      width: ctl.state.width,
      sigma: ctl.state.sigma,
      scale: Number(synthScale.value),
      seed: Number(synthSeed.value),
    });
  });

  for (const btn of root.querySelectorAll<HTMLButtonElement>("[data-zoom]")) {
    btn.addEventListener("click", () => {
      zoom = Number(btn.dataset.zoom);
      render(ctl.state);
    });
  }

  gridRun.addEventListener("click", () => void ctl.runGridPage(wantPage));
  gridPrev.addEventListener("click", () => {
    wantPage = Math.max(0, wantPage - 1);
    void ctl.runGridPage(wantPage);
  });
  gridNext.addEventListener("click", () => {
    wantPage = Math.min(ctl.pages().length - 1, wantPage + 1);
    void ctl.runGridPage(wantPage);
  });

  function renderHistory(state: typeof ctl.state): void {
    historyList.replaceChildren(
      ...state.history.map((entry, i) => {
        const li = document.createElement("li");
        const img = document.createElement("img");
        img.src = dataUrl(entry.image);
        img.title = entryLabel(entry);
        img.addEventListener("click", () =>
          ctl.pickGridCell({ width: entry.width, sigma: entry.sigma }),
        );
        const cap = document.createElement("span");
        cap.textContent =
          `#${i + 1} ${entryLabel(entry)}` +
          (entry.psnr !== null && isFinite(entry.psnr)
            ? ` ${entry.psnr.toFixed(2)} dB`
            : "");
        const pinA = document.createElement("button");
        pinA.textContent = "pin A";
        pinA.addEventListener("click", () => ctl.pinCompare(entry, 0));
        const pinB = document.createElement("button");
        pinB.textContent = "pin B";
        pinB.addEventListener("click", () => ctl.pinCompare(entry, 1));
        li.append(img, cap, pinA, pinB);
        return li;
      }),
    );
  }

  function renderGrid(state: typeof ctl.state): void {
    const pageCount = ctl.pages().length;
    gridPageLabel.textContent =
      state.gridPageCount > 0
        ? `page ${state.gridPage + 1} / ${state.gridPageCount}`
        : `page ${wantPage + 1} / ${pageCount}`;
    gridPrev.disabled = wantPage <= 0;
    gridNext.disabled = wantPage >= pageCount - 1;
    gridCells.replaceChildren(
      ...state.gridCells.map((cell) => {
        const fig = document.createElement("figure");
        fig.className = "cell";
        const img = document.createElement("img");
        img.src = dataUrl(cell.image);
        img.dataset.width = String(cell.width);
        img.dataset.sigma = String(cell.sigma);
        img.addEventListener("click", () => ctl.pickGridCell(cell));
        const cap = document.createElement("figcaption");
        cap.textContent = `${cell.width.toFixed(1)} / ${cell.sigma}`;
        fig.append(img, cap);
        return fig;
      }),
    );
  }

  function render(state: typeof ctl.state): void {
    busy.hidden = !state.busy;
    banner.hidden = state.error === null;
    banner.textContent = state.error ?? "";

    if (modelSelect.length !== state.models.length) {
      modelSelect.replaceChildren(
        ...state.models.map((m) => {
          const opt = document.createElement("option");
          opt.value = m.id;
          opt.textContent = `${m.id} (x${m.scale}, ${m.variant})`;
          return opt;
        }),
      );
    }
    if (state.modelId !== null) modelSelect.value = state.modelId;

    widthSlider.value = String(state.width);
    widthValue.textContent = state.width.toFixed(1);
    sigmaSlider.value = String(state.sigma);
    sigmaValue.textContent = String(state.sigma);
    sigmaSlider.disabled = ctl.sigmaLocked();

    if (state.sourceImage !== null) {
      sourceImg.src = dataUrl(state.sourceImage);
      const d = state.sourceDims;
      sourceCaption.textContent = d
        ? `${d.width}×${d.height}` +
          (state.hrImage !== null ? " (synthetic, ground truth kept)" : "")
        : "";
    }

    if (state.result !== null) {
      resultImg.src = dataUrl(state.result.image);
      resultImg.style.width = `${state.result.dims.width * zoom}px`;
      resultCaption.textContent =
        `${state.result.dims.width}×${state.result.dims.height}` +
        ` · ${state.result.ms.toFixed(0)} ms`;
      const q = state.result.psnr;
      resultPsnr.hidden = q === null;
      resultPsnr.textContent =
        q !== null ? ` · ${isFinite(q) ? q.toFixed(2) : "∞"} dB` : "";
    }

    for (const slot of [0, 1] as const) {
      const entry = state.compare[slot];
      const img = $(`#compare-${slot}`) as HTMLImageElement;
      const cap = $(`#compare-${slot}-cap`);
      if (entry) {
        img.src = dataUrl(entry.image);
        cap.textContent = entryLabel(entry);
      }
    }

    renderHistory(state);
    renderGrid(state);
  }

  ctl.onChange(render);
  render(ctl.state);
}
