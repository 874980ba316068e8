import { describe, expect, it } from "vitest";

import { ConsoleViewModel, FEED_WINDOW } from "../src/model.js";
import { LogRecord, NodeSnapshot } from "../src/types.js";

function nodes(): NodeSnapshot[] {
  return [
    { addr: 1, role: "actuator", associated: true, endpoints: { "1": 0 }, display_buffer: [] },
    { addr: 0, role: "coordinator", associated: true, endpoints: {}, display_buffer: [] },
    { addr: 2, role: "display_monitor", associated: true, endpoints: {}, display_buffer: [] },
  ];
}

function record(kind: string, body: Record<string, unknown>, at = 0): LogRecord {
  return { at, kind, body };
}

describe("ConsoleViewModel", () => {
  it("sorts the node snapshot by address", () => {
    const vm = new ConsoleViewModel();
    vm.setNodes(nodes());
    expect(vm.nodes.map((n) => n.addr)).toEqual([0, 1, 2]);
  });

  it("keeps the feed newest-first and windowed", () => {
    const vm = new ConsoleViewModel();
    for (let i = 1; i <= FEED_WINDOW + 40; i++) {
      vm.applyRecord(i, record("TX", { node: 0 }, i * 10));
    }
    expect(vm.feed.length).toBe(FEED_WINDOW);
    expect(vm.feed[0]!.offset).toBe(FEED_WINDOW + 40);
    expect(vm.lastOffset).toBe(FEED_WINDOW + 40);
    expect(vm.missedOffsets()).toEqual([]);
  });

  it("detects gaps and duplicates in the offset sequence", () => {
    const vm = new ConsoleViewModel();
    vm.applyRecord(1, record("TX", {}));
    vm.applyRecord(3, record("TX", {}));
    expect(vm.missedOffsets()).toEqual([2]);
    vm.applyRecord(3, record("TX", {}));
    expect(vm.duplicateOffsets).toEqual([3]);
    expect(vm.feed.length).toBe(2); // duplicate not applied twice
  });

  it("flips actuator tiles only via DEVICE_STATE records", () => {
    const vm = new ConsoleViewModel();
    vm.setNodes(nodes());
    expect(vm.node(1)!.endpoints["1"]).toBe(0);
    vm.applyRecord(1, record("DEVICE_STATE", { node: 1, endpoints: { "1": 255 } }));
    expect(vm.node(1)!.endpoints["1"]).toBe(255);
  });

  it("appends display lines from DEVICE_STATE records", () => {
    const vm = new ConsoleViewModel();
    vm.setNodes(nodes());
    vm.applyRecord(1, record("DEVICE_STATE", { node: 2, display_last: "Hi", display_len: 1 }));
    expect(vm.node(2)!.display_buffer).toEqual(["Hi"]);
  });

  it("raises alerts for intrusion categories only", () => {
    const vm = new ConsoleViewModel();
    vm.applyRecord(
      1,
      record("MONITOR_EVENT", { category: "COMMAND_SEEN", summary: "x" }),
    );
    vm.applyRecord(
      2,
      record("MONITOR_EVENT", { category: "INTRUSION_FOREIGN_PAN", summary: "bad" }),
    );
    vm.applyRecord(
      3,
      record("MONITOR_EVENT", { category: "INTRUSION_UNKNOWN_SOURCE", summary: "bad" }),
    );
    vm.applyRecord(4, record("MONITOR_EVENT", { category: "FRAME_CORRUPT", summary: "x" }));
    expect(vm.alerts.map((a) => a.offset)).toEqual([3, 2]);
    expect(vm.feed.length).toBe(4);
  });

  it("accepts only DTMF characters into the keypad buffer", () => {
    const vm = new ConsoleViewModel();
    for (const key of ["*", "1", "x", "#", "!", "A"]) {
      vm.keypadPress(key);
    }
    expect(vm.keypadBuffer).toBe("*1#A");
    vm.keypadBackspace();
    expect(vm.keypadBuffer).toBe("*1#");
    vm.keypadClear();
    expect(vm.keypadBuffer).toBe("");
  });
});
