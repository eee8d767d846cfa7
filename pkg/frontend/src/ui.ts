// Console layout and bindings: one main container enclosing the live view,
// the five-button control panel, the rolling detection list and the plate
// query panel.

import { ApiClient } from "./api.js";
import { decodePnm, drawOnCanvas } from "./pnm.js";
import { ConsoleStore, type ConsoleState } from "./state.js";
import type { EventRecord } from "./types.js";

export interface ConsoleUi {
  root: HTMLElement;
  refresh: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function formatTime(timestampMs: number): string {
  return (timestampMs / 1000).toFixed(3) + "s";
}

export function mountConsole(
  host: HTMLElement,
  store: ConsoleStore,
  api: ApiClient,
): ConsoleUi {
  const root = el("main", { id: "console" });

  // header lives in the main frame: connection dot, state, fps gauge, banner
  const header = el("header", { id: "status-bar" });
  const connDot = el("span", { id: "conn-status", class: "dot disconnected" });
  const stateLabel = el("span", { id: "state-label" }, "idle");
  const fpsGauge = el("span", { id: "fps-gauge" }, "0.0 fps");
  const banner = el("div", { id: "warning-banner", hidden: "hidden" });
  const bannerText = el("span", { id: "warning-text" });
  const bannerAck = el("button", { id: "warning-ack" }, "acknowledge");
  banner.append(bannerText, bannerAck);
  header.append(connDot, stateLabel, fpsGauge);
  root.append(header, banner);

  const live = el("section", { id: "live-panel" });
  live.append(el("h2", {}, "Live"), el("canvas", { id: "live-canvas" }));

  const controls = el("section", { id: "control-panel" });
  const btnStart = el("button", { id: "btn-start", disabled: "disabled" }, "Start");
  const btnStop = el("button", { id: "btn-stop", disabled: "disabled" }, "Stop");
  const btnPrint = el("button", { id: "btn-print", disabled: "disabled" }, "Print");
  const btnWarning = el("button", { id: "btn-warning", disabled: "disabled" }, "Warning");
  const btnRecord = el("button", { id: "btn-record", disabled: "disabled" }, "Record");
  const warningReason = el("input", {
    id: "warning-reason",
    placeholder: "warning reason",
  });
  controls.append(
    el("h2", {}, "Controls"),
    btnStart,
    btnStop,
    btnPrint,
    btnWarning,
    btnRecord,
    warningReason,
  );

  const detections = el("section", { id: "detections-panel" });
  const detectionRows = el("tbody", { id: "detection-rows" });
  const detectionsTable = el("table", { id: "detections-table" });
  const head = el("thead");
  const headRow = el("tr");
  for (const title of ["seq", "plate", "class", "time", "crop"]) {
    headRow.append(el("th", {}, title));
  }
  head.append(headRow);
  detectionsTable.append(head, detectionRows);
  const printout = el("div", { id: "print-output", hidden: "hidden" });
  detections.append(el("h2", {}, "Detections"), detectionsTable, printout);

  const query = el("section", { id: "query-panel" });
  const queryInput = el("input", { id: "query-input", placeholder: "plate number" });
  const queryButton = el("button", { id: "query-run" }, "Query");
  const queryResults = el("div", { id: "query-results" });
  query.append(el("h2", {}, "Vehicle query"), queryInput, queryButton, queryResults);

  root.append(live, controls, detections, query);
  host.append(root);

  const thumbnail = (record: EventRecord): HTMLCanvasElement => {
    const canvas = el("canvas", { class: "crop-thumb", "data-seq": String(record.seq) });
    void fetch(api.cropUrl(record.seq))
      .then((resp) => (resp.ok ? resp.arrayBuffer() : Promise.reject(resp.status)))
      .then((buffer) => drawOnCanvas(canvas, decodePnm(buffer)))
      .catch(() => undefined);
    return canvas;
  };

  const recordRow = (record: EventRecord): HTMLTableRowElement => {
    const row = el("tr", { class: "detection-row", "data-seq": String(record.seq) });
    row.append(
      el("td", {}, String(record.seq)),
      el("td", { class: "plate-text" }, record.normalized_text || "(unreadable)"),
      el("td", {}, record.vehicle_class.label),
      el("td", {}, formatTime(record.timestamp_ms)),
    );
    const cell = el("td");
    cell.append(thumbnail(record));
    row.append(cell);
    return row;
  };

  const render = (state: ConsoleState): void => {
    connDot.className = "dot " + (state.connected ? "connected" : "disconnected");
    connDot.title = state.connected ? "stream connected" : "stream disconnected";
    const name = state.pipeline?.state ?? "idle";
    stateLabel.textContent = name;
    fpsGauge.textContent = `${(state.metrics?.fps ?? 0).toFixed(1)} fps`;

    const ready = state.metrics !== null;
    const running = name !== "idle";
    const recording = name === "recording+running";
    btnStart.disabled = !ready;
    btnStop.disabled = !ready;
    btnPrint.disabled = !ready;
    btnWarning.disabled = !ready;
    btnRecord.disabled = !ready || !running;
    btnRecord.textContent = recording ? "Record (on)" : "Record";
    btnRecord.classList.toggle("recording", recording);

    if (state.banner) {
      banner.hidden = false;
      bannerText.textContent = `${state.banner.reason} @ ${formatTime(state.banner.timestamp_ms)}`;
    } else {
      banner.hidden = true;
      bannerText.textContent = "";
    }

    // reuse existing rows by seq so a new detection costs one row, not a
    // rebuild (and one crop fetch, not two hundred)
    const existing = new Map<string, Element>();
    for (const row of Array.from(detectionRows.children)) {
      existing.set(row.getAttribute("data-seq") ?? "", row);
    }
    const stale =
      detectionRows.children.length !== state.detections.length ||
      state.detections.some(
        (d, i) => detectionRows.children[i]?.getAttribute("data-seq") !== String(d.seq),
      );
    if (stale) {
      detectionRows.replaceChildren(
        ...state.detections.map((d) => existing.get(String(d.seq)) ?? recordRow(d)),
      );
    }

    if (state.queryResults === null) {
      queryResults.replaceChildren();
    } else if (state.queryResults.length === 0) {
      queryResults.replaceChildren(
        el("p", { class: "empty-state" }, `no records for "${state.queryPlate}"`),
      );
    } else {
      const table = el("table", { class: "query-table" });
      const body = el("tbody");
      for (const record of state.queryResults) {
        const row = el("tr", { class: "query-row" });
        row.append(
          el("td", {}, String(record.frame_index)),
          el("td", {}, formatTime(record.timestamp_ms)),
          el("td", {}, record.normalized_text),
        );
        const cell = el("td");
        cell.append(thumbnail(record));
        row.append(cell);
        body.append(row);
      }
      table.append(body);
      queryResults.replaceChildren(table);
    }
  };

  btnStart.addEventListener("click", () => {
    void api.start().then((state) => store.setPipeline(state)).catch(() => undefined);
  });
  btnStop.addEventListener("click", () => {
    void api.stop().then((state) => store.setPipeline(state)).catch(() => undefined);
  });
  btnRecord.addEventListener("click", () => {
    const recording = store.getState().pipeline?.state === "recording+running";
    const call = recording ? api.recordStop() : api.recordStart();
    void call.then((state) => store.setPipeline(state)).catch(() => undefined);
  });
  btnPrint.addEventListener("click", () => {
    void api
      .latest(20)
      .then((records) => {
        printout.hidden = false;
        const table = el("table", { class: "print-table" });
        const body = el("tbody");
        for (const record of records) body.append(recordRow(record));
        table.append(body);
        printout.replaceChildren(el("h3", {}, "Latest detections"), table);
      })
      .catch(() => undefined);
  });
  btnWarning.addEventListener("click", () => {
    const reason = warningReason.value.trim();
    if (!reason) {
      warningReason.classList.add("invalid");
      warningReason.focus();
      return; // blocked client-side: a warning needs a reason
    }
    warningReason.classList.remove("invalid");
    void api
      .warning(reason)
      .then(() => {
        warningReason.value = "";
      })
      .catch(() => undefined);
  });
  bannerAck.addEventListener("click", () => store.acknowledgeWarning());

  const runQuery = (): void => {
    const plate = queryInput.value.trim();
    if (!plate) return;
    void api
      .vehicles(plate)
      .then((records) => store.setQuery(plate, records))
      .catch(() => undefined);
  };
  queryButton.addEventListener("click", runQuery);
  queryInput.addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") runQuery();
  });

  store.subscribe(render);
  render(store.getState());
  return { root, refresh: () => render(store.getState()) };
}
