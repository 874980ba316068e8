"""Scenario loading, deterministic execution, step/run equivalence."""

import json

import pytest

from monitomation import commands, dtmf, mac
from monitomation.engine import (
    Engine,
    ParseError,
    ValidationError,
    load_scenario,
    patch_pan_id,
    run,
)
from monitomation.serial_link import uart_byte_time_us

from conftest import basic_scenario_doc, make_scenario


def load(doc: dict):
    return load_scenario(json.dumps(doc))


class TestLoadScenario:
    def test_minimal_defaults(self):
        s = load({"pan_id": 1, "nodes": [{"role": "coordinator"}, {"role": "actuator"}]})
        assert s.band.band_id.value == "B2450"
        assert s.seed == 0
        assert s.noise_rate == 0.0
        assert s.duration_us == 1_000_000
        assert [n.addr for n in s.nodes] == [0, 1]

    def test_malformed_json_is_parse_error(self):
        with pytest.raises(ParseError) as err:
            load_scenario("{not json")
        assert "line" in str(err.value)

    def test_capacity_cap(self):
        doc = {
            "pan_id": 1,
            "nodes": [{"role": "coordinator"}]
            + [{"role": "actuator"} for _ in range(256)],
        }
        with pytest.raises(ValidationError) as err:
            load(doc)
        assert "CapacityExceeded" in str(err.value)

    def test_255_end_devices_allowed(self):
        doc = {
            "pan_id": 1,
            "nodes": [{"role": "coordinator"}]
            + [{"role": "actuator"} for _ in range(255)],
        }
        s = load(doc)
        assert len(s.nodes) == 256

    def test_slotted_mode_unsupported(self):
        doc = basic_scenario_doc()
        doc["mode"] = "slotted"
        with pytest.raises(ValidationError) as err:
            load(doc)
        assert "Unsupported" in str(err.value)

    def test_gts_unsupported(self):
        doc = basic_scenario_doc()
        doc["gts"] = True
        with pytest.raises(ValidationError) as err:
            load(doc)
        assert "Unsupported" in str(err.value)

    def test_two_coordinators_rejected(self):
        doc = {
            "pan_id": 1,
            "nodes": [{"role": "coordinator"}, {"role": "coordinator"}],
        }
        with pytest.raises(ValidationError):
            load(doc)

    def test_duplicate_addresses_rejected(self):
        doc = {
            "pan_id": 1,
            "nodes": [
                {"role": "coordinator"},
                {"role": "actuator", "addr": 3},
                {"role": "display_monitor", "addr": 3},
            ],
        }
        with pytest.raises(ValidationError):
            load(doc)

    def test_auto_addresses_fill_lowest_free(self):
        doc = {
            "pan_id": 1,
            "nodes": [
                {"role": "coordinator"},
                {"role": "actuator", "addr": 2},
                {"role": "actuator"},
                {"role": "actuator"},
            ],
        }
        s = load(doc)
        assert [n.addr for n in s.nodes] == [0, 2, 1, 3]

    def test_unsorted_script_rejected(self):
        doc = basic_scenario_doc(
            script=[
                {"at": 100, "stimulus": "typed_input", "input": "a"},
                {"at": 50, "stimulus": "typed_input", "input": "b"},
            ]
        )
        with pytest.raises(ValidationError):
            load(doc)

    def test_duration_must_cover_script(self):
        doc = basic_scenario_doc(
            duration_us=10,
            script=[{"at": 100, "stimulus": "typed_input", "input": "a"}],
        )
        with pytest.raises(ValidationError):
            load(doc)

    def test_bad_baud_rejected(self):
        doc = basic_scenario_doc(baud=1200)
        with pytest.raises(ValidationError) as err:
            load(doc)
        assert "BaudOutOfRange" in str(err.value)

    def test_unknown_mac_override_rejected(self):
        doc = basic_scenario_doc(mac={"bogus_knob": 1})
        with pytest.raises(ValidationError):
            load(doc)


class TestDeterminism:
    def test_same_scenario_byte_identical_logs(self):
        doc = basic_scenario_doc(
            noise_rate=0.3,
            seed=42,
            beacon_interval_us=100_000,
            script=[
                {"at": 0, "stimulus": "typed_input", "input": "*1*1*1#"},
                {"at": 300_000, "stimulus": "typed_input", "input": "hello"},
            ],
        )
        a = run(load(doc)).log_text()
        b = run(load(doc)).log_text()
        assert a == b
        assert len(a) > 0

    def test_different_seed_differs(self):
        doc = basic_scenario_doc(
            noise_rate=0.4,
            script=[{"at": 0, "stimulus": "typed_input", "input": "hello"}],
        )
        a = run(load({**doc, "seed": 1})).log_text()
        b = run(load({**doc, "seed": 2})).log_text()
        assert a != b

    def test_step_run_equivalence(self):
        doc = basic_scenario_doc(
            beacon_interval_us=200_000,
            script=[{"at": 0, "stimulus": "typed_input", "input": "*1*1*1#"}],
        )
        bulk = run(load(doc))
        engine = Engine(load(doc))
        stepped = []
        while True:
            record = engine.step()
            if record is None:
                break
            stepped.append(record.to_json_line())
        assert stepped == bulk.log_lines()

    def test_step_done_idempotent(self):
        engine = Engine(make_scenario())
        while engine.step() is not None:
            pass
        assert engine.step() is None
        assert engine.step() is None


class TestEventOrdering:
    def test_first_record_is_association_at_zero(self):
        engine = Engine(make_scenario())
        record = engine.step()
        assert record.at == 0
        assert record.kind == "MAC_EVENT"
        assert record.body["event"] == "associated"
        assert record.body["node"] == 0

    def test_equal_time_ties_break_by_node_address(self):
        engine = Engine(make_scenario())
        engine.run_until(1)
        order = []
        engine._schedule(50, 2, lambda: order.append(2))
        engine._schedule(50, 1, lambda: order.append(1))
        engine._schedule(50, -1, lambda: order.append("engine"))
        engine.run_until(50)
        assert order == ["engine", 1, 2]


class TestBeacons:
    def _beacon_tx_count(self, duration, interval):
        doc = basic_scenario_doc(
            beacon_interval_us=interval, duration_us=duration, script=[]
        )
        result = run(load(doc))
        count = 0
        for r in result.records:
            if r.kind == "TX":
                frame = mac.decode_frame(bytes.fromhex(r.body["frame_hex"]))
                if frame.frame_type is mac.FrameType.BEACON:
                    count += 1
        return count

    def test_exactly_floor_duration_over_interval(self):
        assert self._beacon_tx_count(1_000_000, 1_000_000) == 1
        assert self._beacon_tx_count(2_500_000, 1_000_000) == 2
        assert self._beacon_tx_count(999_999, 1_000_000) == 0
        assert self._beacon_tx_count(600_000, 200_000) == 3

    def test_beacon_seq_increments(self):
        doc = basic_scenario_doc(beacon_interval_us=100_000, duration_us=500_000)
        result = run(load(doc))
        seqs = []
        for r in result.records:
            if r.kind == "TX":
                frame = mac.decode_frame(bytes.fromhex(r.body["frame_hex"]))
                if frame.frame_type is mac.FrameType.BEACON:
                    seqs.append(frame.seq)
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == len(seqs) == 5

    def test_beacon_payload_member_count(self):
        doc = basic_scenario_doc(beacon_interval_us=1_000_000, duration_us=1_000_000)
        result = run(load(doc))
        beacons = [
            mac.decode_frame(bytes.fromhex(r.body["frame_hex"]))
            for r in result.records
            if r.kind == "TX"
        ]
        beacons = [f for f in beacons if f.frame_type is mac.FrameType.BEACON]
        assert beacons[0].payload == (2).to_bytes(2, "little")


class TestEndToEnd:
    def test_keypad_control_reaches_actuator(self):
        doc = basic_scenario_doc(
            script=[{"at": 0, "stimulus": "typed_input", "input": "*1*1*1#"}]
        )
        result = run(load(doc))
        actuator = next(n for n in result.nodes if n["addr"] == 1)
        assert actuator["endpoints"] == {"1": 255}
        assert result.summary()["delivered"] == 1

    def test_text_reaches_display_buffer(self):
        doc = basic_scenario_doc(
            script=[{"at": 0, "stimulus": "typed_input", "input": "good morning"}]
        )
        result = run(load(doc))
        display = next(n for n in result.nodes if n["addr"] == 2)
        assert display["display_buffer"] == ["good morning"]
        assert result.summary()["texts_shown"] == 1

    def test_query_round_trip(self):
        doc = basic_scenario_doc(
            script=[
                {"at": 0, "stimulus": "typed_input", "input": "*1*1*3*90#"},
                {"at": 200_000, "stimulus": "typed_input", "input": "*1*1*9#"},
            ]
        )
        result = run(load(doc))
        texts = [
            r
            for r in result.records
            if r.kind == "TX" and r.body["node"] == 1
        ]
        # the actuator answered the query with a text reply frame
        replies = []
        for r in texts:
            frame = mac.decode_frame(bytes.fromhex(r.body["frame_hex"]))
            if frame.frame_type is mac.FrameType.DATA:
                instr = commands.decode_payload(frame.payload, dest=frame.dest)
                replies.append(instr.text)
        assert "EP1=90" in replies

    def test_dtmf_audio_stimulus(self, tmp_path):
        from test_dtmf import synth_sequence

        samples, rate = synth_sequence("*1*1*1#", tone_ms=80, gap_ms=60)
        dtmf.write_wav(str(tmp_path / "cmd.wav"), samples, rate)
        doc = basic_scenario_doc(
            script=[{"at": 0, "stimulus": "dtmf_audio", "wav": "cmd.wav"}]
        )
        scenario = load_scenario(json.dumps(doc), base_dir=tmp_path)
        result = run(scenario)
        actuator = next(n for n in result.nodes if n["addr"] == 1)
        assert actuator["endpoints"] == {"1": 255}
        stim = next(r for r in result.records if r.kind == "STIMULUS")
        assert stim.body["keys"] == "*1*1*1#"

    def test_serial_delay_exact(self):
        doc = basic_scenario_doc(
            baud=115200,
            script=[{"at": 1000, "stimulus": "typed_input", "input": "*1*1*1#"}],
        )
        result = run(load(doc))
        submit = next(
            r
            for r in result.records
            if r.kind == "MAC_EVENT" and r.body.get("event") == "mac_submit"
        )
        byte_time = uart_byte_time_us(load(doc).serial)
        expected = 1000 + round(float(4 * byte_time))
        assert submit.at == expected
        assert submit.body["octets"] == 4

    def test_seq_increments_per_submission(self):
        doc = basic_scenario_doc(
            script=[
                {"at": 0, "stimulus": "typed_input", "input": "hello"},
                {"at": 200_000, "stimulus": "typed_input", "input": "again"},
                {"at": 400_000, "stimulus": "typed_input", "input": "*1*1*1#"},
            ]
        )
        result = run(load(doc))
        seqs = []
        for r in result.records:
            if r.kind == "TX" and r.body["node"] == 0:
                frame = mac.decode_frame(bytes.fromhex(r.body["frame_hex"]))
                if frame.frame_type is mac.FrameType.DATA and frame.seq not in seqs:
                    seqs.append(frame.seq)
        assert seqs == [0, 1, 2]

    def test_destination_unknown_logged(self):
        doc = basic_scenario_doc(
            script=[{"at": 0, "stimulus": "typed_input", "input": "*200*1*1#"}]
        )
        result = run(load(doc))
        rejected = [
            r
            for r in result.records
            if r.kind == "MAC_EVENT" and r.body.get("event") == "submit_rejected"
        ]
        assert len(rejected) == 1
        assert rejected[0].body["error"] == "DestinationUnknown"


class TestConservation:
    def test_every_rx_matches_a_tx_end(self):
        doc = basic_scenario_doc(
            beacon_interval_us=100_000,
            script=[
                {"at": 0, "stimulus": "typed_input", "input": "*1*1*1#"},
                {"at": 300_000, "stimulus": "typed_input", "input": "hello"},
            ],
        )
        result = run(load(doc))
        tx_ends = {}
        for r in result.records:
            if r.kind == "TX":
                tx_ends.setdefault((r.body["node"], r.body["start"]), set()).add(
                    r.body["end"]
                )
        rx_count = 0
        for r in result.records:
            if r.kind == "RX":
                rx_count += 1
                key = (r.body["tx_node"], r.body["tx_start"])
                assert key in tx_ends
                assert r.at in tx_ends[key]
        assert rx_count > 0


class TestInjectionAndDrop:
    def test_foreign_pan_injection_flagged_not_acted(self):
        raw = mac.encode_frame(
            mac.Frame(
                mac.FrameType.DATA,
                0,
                1,
                1,
                0,
                commands.encode_payload(commands.Instruction.control(1, 1, commands.Action.ON)),
            )
        )
        doc = basic_scenario_doc(
            script=[
                {
                    "at": 1000,
                    "stimulus": "inject_raw_frame",
                    "hex": raw.hex(),
                    "pan_id": 0xBEEF,
                }
            ]
        )
        result = run(load(doc))
        intrusions = [
            r
            for r in result.records
            if r.kind == "MONITOR_EVENT"
            and r.body["category"] == "INTRUSION_FOREIGN_PAN"
        ]
        assert len(intrusions) == 1
        actuator = next(n for n in result.nodes if n["addr"] == 1)
        assert actuator["endpoints"] == {"1": 0}

    def test_unknown_source_injection_flagged_not_acted(self):
        raw = mac.encode_frame(
            mac.Frame(
                mac.FrameType.DATA,
                0,
                1,
                1,
                77,
                commands.encode_payload(commands.Instruction.control(1, 1, commands.Action.ON)),
            )
        )
        doc = basic_scenario_doc(
            script=[{"at": 1000, "stimulus": "inject_raw_frame", "hex": raw.hex()}]
        )
        result = run(load(doc))
        intrusions = [
            r
            for r in result.records
            if r.kind == "MONITOR_EVENT"
            and r.body["category"] == "INTRUSION_UNKNOWN_SOURCE"
        ]
        assert len(intrusions) == 1
        actuator = next(n for n in result.nodes if n["addr"] == 1)
        assert actuator["endpoints"] == {"1": 0}

    def test_garbage_injection_logged_corrupt(self):
        doc = basic_scenario_doc(
            script=[{"at": 1000, "stimulus": "inject_raw_frame", "hex": "deadbeef00112233445566"}]
        )
        result = run(load(doc))
        corrupt = [
            r
            for r in result.records
            if r.kind == "MONITOR_EVENT" and r.body["category"] == "FRAME_CORRUPT"
        ]
        assert len(corrupt) == 1

    def test_patch_pan_id_keeps_fcs_valid(self):
        raw = mac.encode_frame(mac.Frame(mac.FrameType.DATA, 3, 1, 1, 0, b"zz"))
        patched = patch_pan_id(raw, 0xBEEF)
        frame = mac.decode_frame(patched)
        assert frame.pan_id == 0xBEEF
        assert frame.payload == b"zz"

    def test_dropped_node_goes_silent_and_census_fires(self):
        doc = basic_scenario_doc(
            silence_threshold_us=100_000,
            duration_us=400_000,
            script=[{"at": 0, "stimulus": "drop_node", "addr": 1}],
        )
        result = run(load(doc))
        silents = [
            r
            for r in result.records
            if r.kind == "MONITOR_EVENT" and r.body["category"] == "NODE_SILENT"
        ]
        # censuses at 100k..400k; silence exceeds the threshold from 200k on
        assert [r.at for r in silents] == [200_000, 300_000, 400_000]
        assert all(r.body["src"] == 1 for r in silents)

    def test_dropped_node_stops_acking(self):
        doc = basic_scenario_doc(
            script=[
                {"at": 0, "stimulus": "drop_node", "addr": 1},
                {"at": 1000, "stimulus": "typed_input", "input": "*1*1*1#"},
            ]
        )
        result = run(load(doc))
        assert result.summary()["no_ack"] == 1
        actuator = next(n for n in result.nodes if n["addr"] == 1)
        assert actuator["endpoints"] == {"1": 0}


class TestContention:
    def test_no_overlapping_ok_receptions_under_saturation(self):
        doc = {
            "pan_id": 1,
            "nodes": [{"role": "coordinator"}]
            + [{"role": "actuator", "addr": i} for i in range(1, 6)],
            "beacon_interval_us": None,
            "silence_threshold_us": None,
            "duration_us": 300_000,
        }
        scenario = load(doc)
        engine = Engine(scenario)
        horizon = 300_000

        def resubmit(addr):
            def cb(_result):
                if engine.now < horizon:
                    engine.schedule_unicast(addr, 0, b"data", engine.now, on_result=cb)

            return cb

        for addr in range(1, 6):
            engine.schedule_unicast(addr, 0, b"data", 0, on_result=resubmit(addr))
        engine.run_to_completion()

        transmissions = {}
        for r in engine.records:
            if r.kind == "TX":
                transmissions[(r.body["node"], r.body["start"])] = (
                    r.body["start"],
                    r.body["end"],
                )
        overlapping = set()
        txs = list(transmissions.items())
        for i in range(len(txs)):
            for j in range(i + 1, len(txs)):
                (ka, (sa, ea)), (kb, (sb, eb)) = txs[i], txs[j]
                if sa < eb and sb < ea:
                    overlapping.add(ka)
                    overlapping.add(kb)
        assert len(txs) > 20
        ok_overlapped = [
            r
            for r in engine.records
            if r.kind == "RX"
            and r.body["status"] == "OK"
            and (r.body["tx_node"], r.body["tx_start"]) in overlapping
        ]
        assert ok_overlapped == []
        # contention actually happened, so the collision model was exercised
        assert overlapping
