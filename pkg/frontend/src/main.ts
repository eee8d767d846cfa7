// Bootstrap: wire the store, API client, stream and frame poller together.
// The API base defaults to the page origin; override with ?api=http://host:port.

import { ApiClient } from "./api.js";
import { decodePnm, drawOnCanvas } from "./pnm.js";
import { ConsoleStore } from "./state.js";
import { StreamClient } from "./stream.js";
import { mountConsole } from "./ui.js";

const FRAME_POLL_MS = 500;

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return (override ?? window.location.origin).replace(/\/$/, "");
}

export function boot(host: HTMLElement): void {
  const store = new ConsoleStore();
  const api = new ApiClient(apiBase());
  mountConsole(host, store, api);

  const stream = new StreamClient(api.streamUrl(), {
    onMessage: (message) => store.apply(message),
    onStatus: (connected) => store.setConnected(connected),
  });
  stream.connect();

  // buttons unlock once the service answers /metrics
  void api
    .metrics()
    .then((metrics) => store.setMetrics(metrics))
    .catch(() => undefined);

  const canvas = document.getElementById("live-canvas") as HTMLCanvasElement | null;
  let polling = false;
  setInterval(() => {
    const state = store.getState();
    if (!canvas || polling || (state.pipeline?.state ?? "idle") === "idle") return;
    polling = true;
    void fetch(api.frameLatestUrl())
      .then((resp) => (resp.ok ? resp.arrayBuffer() : Promise.reject(resp.status)))
      .then((buffer) => drawOnCanvas(canvas, decodePnm(buffer)))
      .catch(() => undefined)
      .finally(() => {
        polling = false;
      });
  }, FRAME_POLL_MS);

  window.addEventListener("beforeunload", () => stream.close());
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app") as HTMLElement);
}
