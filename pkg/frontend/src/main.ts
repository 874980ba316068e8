/** Browser entry point: renders the view model and wires user actions. */

import { ConsoleController } from "./console.js";
import { FeedEntry } from "./types.js";

const KEYPAD_LAYOUT = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "*", "0", "#"];
const VISIBLE_FEED = 50;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function describe(entry: FeedEntry): string {
  const { record } = entry;
  const body = record.body as Record<string, unknown>;
  switch (record.kind) {
    case "MONITOR_EVENT":
      return `${body["category"]} ${body["summary"] ?? ""}`;
    case "DEVICE_STATE":
      return body["display_last"] !== undefined
        ? `display shows ${JSON.stringify(body["display_last"])}`
        : `node ${body["node"]} endpoints ${JSON.stringify(body["endpoints"])}`;
    case "MAC_EVENT":
      return `${body["event"]} ${body["result"] ?? ""} node ${body["node"]}`;
    case "STIMULUS":
      return `${body["type"]} ${body["input"] ?? body["keys"] ?? ""}`;
    case "TX":
      return `node ${body["node"]} on air ${body["start"]}-${body["end"]}`;
    case "RX":
      return `node ${body["node"]} heard ${body["tx_node"]} (${body["status"]})`;
    default:
      return record.kind;
  }
}

function render(console_: ConsoleController): void {
  const vm = console_.vm;

  const banner = document.getElementById("banner")!;
  banner.textContent =
    vm.connection === "LIVE"
      ? "live"
      : vm.connection === "RECONNECTING"
        ? "connection lost, reconnecting..."
        : "offline: gateway unreachable";
  banner.className = `banner ${vm.connection.toLowerCase()}`;

  const nodesBox = document.getElementById("nodes")!;
  nodesBox.replaceChildren();
  for (const node of vm.nodes) {
    const tile = el("div", "tile");
    tile.append(el("div", "tile-title", `${node.addr} - ${node.role}`));
    for (const [endpoint, level] of Object.entries(node.endpoints)) {
      const state = level > 0 ? `on (${level})` : "off";
      const light = el("div", level > 0 ? "endpoint on" : "endpoint", `EP${endpoint}: ${state}`);
      tile.append(light);
    }
    if (node.role === "display_monitor") {
      const last = node.display_buffer[node.display_buffer.length - 1] ?? "(empty)";
      tile.append(el("div", "display-line", `display: ${last}`));
    }
    nodesBox.append(tile);
  }

  const alertsBox = document.getElementById("alerts")!;
  alertsBox.replaceChildren();
  for (const alert of vm.alerts.slice(0, 10)) {
    alertsBox.append(el("div", "alert", `#${alert.offset} ${describe(alert)}`));
  }

  const feedBox = document.getElementById("feed")!;
  feedBox.replaceChildren();
  for (const entry of vm.feed.slice(0, VISIBLE_FEED)) {
    const kind = entry.record.kind.toLowerCase().replace("_", "-");
    const line = el("div", `feed-line ${kind}`);
    line.append(el("span", "offset", `#${entry.offset}`));
    line.append(el("span", "at", `${entry.record.at} us`));
    line.append(el("span", "text", describe(entry)));
    feedBox.append(line);
  }

  (document.getElementById("keypad-buffer") as HTMLInputElement).value = vm.keypadBuffer;
  document.getElementById("composer-status")!.textContent = vm.composerStatus;
}

function main(): void {
  const controller = new ConsoleController(window.location.origin, {
    onChange: () => render(controller),
  });

  const keypadBox = document.getElementById("keypad")!;
  for (const key of KEYPAD_LAYOUT) {
    const button = el("button", "key", key);
    button.addEventListener("click", () => {
      controller.vm.keypadPress(key);
      render(controller);
    });
    keypadBox.append(button);
  }
  document.getElementById("keypad-clear")!.addEventListener("click", () => {
    controller.vm.keypadClear();
    render(controller);
  });
  document.getElementById("keypad-send")!.addEventListener("click", () => {
    void controller.sendKeypad();
  });

  const form = document.getElementById("composer") as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = (document.getElementById("composer-text") as HTMLInputElement).value;
    const destRaw = (document.getElementById("composer-dest") as HTMLInputElement).value;
    const dest = destRaw === "" ? undefined : Number(destRaw);
    void controller.sendMessage(text, dest);
  });

  void controller.connect();
  render(controller);
}

main();
