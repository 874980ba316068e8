"""Radio medium: airtime math, CCA, energy detection, broadcast outcomes."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monitomation import phy
from monitomation.errors import SizeError
from monitomation.phy import (
    BAND_868,
    BAND_915,
    BAND_2450,
    BANDS,
    Medium,
    RxStatus,
    Transmission,
    airtime,
    airtime_exact_us,
)
from monitomation.rng import NodeRng

from oracles import busy_oracle

TABLE_ROWS = {
    "B868": ((868.0, 868.6), 300, "BPSK", 20, 20_000, 2),
    "B915": ((902.0, 928.0), 600, "BPSK", 40, 40_000, 2),
    "B2450": ((2400.0, 2483.5), 2000, "OQPSK", 250, 62_500, 16),
}


class TestBandConfig:
    def test_shipped_bands_match_published_rows(self):
        for band_id, band in BANDS.items():
            freq, chips, mod, bits, syms, alphabet = TABLE_ROWS[band_id.value]
            assert band.freq_range_mhz == freq
            assert band.chip_rate_kchips == chips
            assert band.modulation.value == mod
            assert band.bit_rate_kbps == bits
            assert band.symbol_rate_sps == syms
            assert band.symbol_alphabet == alphabet

    def test_bit_rate_symbol_rate_identity(self):
        for band in BANDS.values():
            assert (
                band.bit_rate_kbps * 1000
                == band.symbol_rate_sps * int(math.log2(band.symbol_alphabet))
            )

    def test_overhead_non_negative(self):
        for band in BANDS.values():
            assert band.phy_overhead_octets >= 0


class TestAirtime:
    def test_empty_psdu_2450(self):
        assert airtime(0, BAND_2450) == 192

    def test_max_psdu_2450(self):
        assert airtime(127, BAND_2450) == 4256

    def test_empty_psdu_868(self):
        assert airtime(0, BAND_868) == 2400

    def test_oversize_rejected(self):
        with pytest.raises(SizeError):
            airtime(128, BAND_2450)

    def test_strictly_increasing_in_size(self):
        for band in BANDS.values():
            values = [airtime(n, band) for n in range(128)]
            assert all(b > a for a, b in zip(values, values[1:]))

    def test_exact_bits_identity_2450(self):
        # airtime (seconds) x bit rate == total bits, symbolically for all sizes
        for n in range(128):
            seconds = airtime_exact_us(n, BAND_2450) / 1_000_000
            assert seconds * 250_000 == (6 + n) * 8

    def test_end_minus_start_is_airtime(self):
        psdu = bytes(20)
        tx = Transmission(1, 1000, 1000 + airtime(20, BAND_2450), psdu, phy.BandId.B2450)
        assert tx.end - tx.start == airtime(len(psdu), BAND_2450)
        assert tx.end > tx.start


class TestCca:
    def test_empty_medium_idle(self):
        medium = Medium(BAND_2450)
        assert medium.cca(0) is False

    def test_busy_inside_transmission(self):
        medium = Medium(BAND_2450)
        tx = Transmission(1, 100, 300, bytes(5), phy.BandId.B2450)
        medium.begin(tx)
        assert medium.cca(100) is True
        assert medium.cca(299) is True

    def test_idle_at_exact_end(self):
        medium = Medium(BAND_2450)
        tx = Transmission(1, 100, 300, bytes(5), phy.BandId.B2450)
        medium.begin(tx)
        assert medium.cca(300) is False

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_matches_interval_oracle(self, data):
        medium = Medium(BAND_2450)
        intervals = []
        start = 0
        for _ in range(data.draw(st.integers(0, 8))):
            start += data.draw(st.integers(0, 500))
            length = data.draw(st.integers(1, 400))
            tx = Transmission(1, start, start + length, bytes(3), phy.BandId.B2450)
            medium.begin(tx)
            intervals.append((start, start + length))
            start += data.draw(st.integers(0, 600))
        horizon = (intervals[-1][1] + 10) if intervals else 50
        for t in range(0, horizon, 7):
            assert medium.cca(t) == busy_oracle(intervals, t)
        for s, e in intervals:
            assert medium.cca(s) is True
            assert medium.cca(e - 1) is True
            assert medium.cca(e) == busy_oracle(intervals, e)


class TestEnergyDetect:
    def test_idle_reads_zero(self):
        assert Medium(BAND_2450).energy_detect(5) == 0

    def test_single_clean_transmission_full_scale(self):
        medium = Medium(BAND_2450, 0.0)
        medium.begin(Transmission(1, 0, 100, bytes(3), phy.BandId.B2450))
        assert medium.energy_detect(50) == 255

    def test_two_overlapping_cap_at_255(self):
        medium = Medium(BAND_2450, 0.0)
        medium.begin(Transmission(1, 0, 100, bytes(3), phy.BandId.B2450))
        medium.begin(Transmission(2, 10, 90, bytes(3), phy.BandId.B2450))
        assert medium.energy_detect(50) == 255

    def test_monotone_in_concurrency(self):
        medium = Medium(BAND_2450, 0.9)
        readings = []
        for i in range(4):
            medium.begin(Transmission(i, 0, 100, bytes(3), phy.BandId.B2450))
            readings.append(medium.energy_detect(50))
        assert readings == sorted(readings)
        assert all(r <= 255 for r in readings)


def _listeners(addrs, seed=0):
    return {a: NodeRng(seed, a) for a in addrs}


class TestBroadcast:
    def test_clean_single_transmission_all_ok(self):
        medium = Medium(BAND_2450, 0.0)
        psdu = bytes(range(20))
        tx = Transmission(9, 0, airtime(20, BAND_2450), psdu, phy.BandId.B2450)
        medium.begin(tx)
        outcomes = medium.broadcast(tx, _listeners([1, 2, 3]))
        assert len(outcomes) == 3
        for outcome in outcomes:
            assert outcome.status is RxStatus.OK
            assert outcome.psdu == psdu
            assert outcome.lqi == 255

    def test_overlap_collides_both_ways(self):
        medium = Medium(BAND_2450, 0.0)
        tx_a = Transmission(1, 0, 500, bytes(10), phy.BandId.B2450)
        tx_b = Transmission(2, 400, 900, bytes(10), phy.BandId.B2450)
        medium.begin(tx_a)
        medium.begin(tx_b)
        assert tx_a.collided and tx_b.collided
        for tx in (tx_a, tx_b):
            for outcome in medium.broadcast(tx, _listeners([5])):
                assert outcome.status is RxStatus.COLLIDED
                assert outcome.lqi == 0

    def test_back_to_back_do_not_collide(self):
        medium = Medium(BAND_2450, 0.0)
        tx_a = Transmission(1, 0, 500, bytes(10), phy.BandId.B2450)
        tx_b = Transmission(2, 500, 900, bytes(10), phy.BandId.B2450)
        medium.begin(tx_a)
        medium.begin(tx_b)
        assert not tx_a.collided and not tx_b.collided

    def test_full_noise_corrupts_everything(self):
        medium = Medium(BAND_2450, 1.0)
        psdu = bytes(range(30))
        tx = Transmission(9, 0, airtime(30, BAND_2450), psdu, phy.BandId.B2450)
        medium.begin(tx)
        for outcome in medium.broadcast(tx, _listeners([1, 2, 3, 4])):
            assert outcome.status is RxStatus.NOISE_CORRUPTED
            assert outcome.psdu != psdu

    def test_corruption_flips_at_least_one_bit(self):
        medium = Medium(BAND_2450, 1.0)
        psdu = bytes(16)
        tx = Transmission(9, 0, airtime(16, BAND_2450), psdu, phy.BandId.B2450)
        medium.begin(tx)
        (outcome,) = medium.broadcast(tx, _listeners([1]))
        differing_bits = sum(
            bin(a ^ b).count("1") for a, b in zip(outcome.psdu, psdu)
        )
        assert differing_bits >= 1

    def test_zero_noise_no_overlap_always_ok(self):
        medium = Medium(BAND_2450, 0.0)
        t = 0
        for i in range(50):
            psdu = bytes([i]) * (1 + i % 40)
            tx = Transmission(0, t, t + airtime(len(psdu), BAND_2450), psdu, phy.BandId.B2450)
            medium.begin(tx)
            for outcome in medium.broadcast(tx, _listeners([1, 2], seed=i)):
                assert outcome.status is RxStatus.OK
                assert outcome.psdu == psdu
            medium.end(tx)
            t = tx.end

    def test_noisy_but_delivered_lqi(self):
        medium = Medium(BAND_2450, 0.2)
        assert medium._noisy_lqi() == 204  # 255 * 0.8


@pytest.mark.parametrize(
    "band,expected",
    [(BAND_868, 1000), (BAND_915, 500), (BAND_2450, 320)],
)
def test_backoff_unit_twenty_symbols(band, expected):
    assert band.symbol_time_us(20) == expected
