import { TunerController } from "./controller.js";
import { createApp } from "./view.js";

const STORAGE_KEY = "tuner-base-url";
const DEFAULT_BASE = "http://127.0.0.1:8000";

const base = localStorage.getItem(STORAGE_KEY) ?? DEFAULT_BASE;
const controller = new TunerController(base);
controller.onChange((state) =>
  localStorage.setItem(STORAGE_KEY, state.baseUrl),
);

createApp(document.getElementById("app")!, controller);
void controller.loadModels();
