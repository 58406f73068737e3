import numpy as np
import pytest
from scipy.io import wavfile

from mpnle import cli
from mpnle.filterbank import band_power
from mpnle.gains import NleConfig, long_term_power
from mpnle.harness import (
    SweepGrid,
    TrialSpec,
    aggregate,
    load_wav,
    make_noise,
    means_path,
    mix_at_snr,
    pad_speech,
    read_rows,
    run_sweep,
    run_trial,
    save_wav,
    synthetic_speech,
    wav_name,
)
from mpnle.stft import TimeSignal, analyze, synthesize


@pytest.fixture
def speech_wav(tmp_path, speech):
    path = tmp_path / "speech.wav"
    save_wav(path, speech, "float32")
    return path


class TestWav:
    def test_pcm16_scaling(self, tmp_path):
        data = np.array([0, 16384, -32768, 32767], dtype=np.int16)
        wavfile.write(tmp_path / "a.wav", 16000, data)
        sig = load_wav(tmp_path / "a.wav")
        np.testing.assert_array_equal(sig.samples, data / 32768.0)

    def test_wrong_rate(self, tmp_path):
        wavfile.write(tmp_path / "a.wav", 44100, np.zeros(10, dtype=np.int16))
        with pytest.raises(ValueError, match="expected 16000 Hz"):
            load_wav(tmp_path / "a.wav")

    def test_stereo_rejected(self, tmp_path):
        wavfile.write(tmp_path / "a.wav", 16000, np.zeros((10, 2), dtype=np.int16))
        with pytest.raises(ValueError, match="mono"):
            load_wav(tmp_path / "a.wav")

    @pytest.mark.parametrize("fmt", ["float32", "float64"])
    def test_float_round_trip(self, tmp_path, rng, fmt):
        x = TimeSignal(rng.uniform(-1, 1, 1000).astype(fmt))
        save_wav(tmp_path / "a.wav", x, fmt)
        assert np.array_equal(load_wav(tmp_path / "a.wav").samples, x.samples)


def test_pad_speech(speech):
    out = pad_speech(speech)
    assert len(out) == len(speech) + 10000
    assert not np.any(out.samples[:8000])
    assert not np.any(out.samples[-2000:])
    assert not np.any(pad_speech(TimeSignal(np.zeros(50))).samples)


class TestNoise:
    def test_white_deterministic_unit_variance(self):
        a = make_noise("white", 100000, 3)
        b = make_noise("white", 100000, 3)
        assert np.array_equal(a.samples, b.samples)
        assert abs(np.var(a.samples) - 1.0) <= 0.02

    def test_speech_shaped_profile(self, speech, weights, params):
        clean = pad_speech(speech)
        noise = make_noise("speech_shaped", 6 * len(clean), 2, speech=clean)
        ps = band_power(long_term_power(analyze(clean, params)), weights)
        pn = band_power(long_term_power(analyze(noise, params)), weights)
        diff = 10 * np.log10(ps / ps.sum()) - 10 * np.log10(pn / pn.sum())
        assert np.max(np.abs(diff)) <= 1.0

    def test_file_excerpt(self, tmp_path, rng):
        rec = rng.uniform(-0.5, 0.5, 5000)
        save_wav(tmp_path / "n.wav", TimeSignal(rec), "float64")
        out = make_noise(f"file:{tmp_path / 'n.wav'}", 1200, 9).samples
        starts = [i for i in range(len(rec) - 1199) if np.array_equal(rec[i:i + 1200], out)]
        assert len(starts) == 1

    def test_file_too_short(self, tmp_path):
        save_wav(tmp_path / "n.wav", TimeSignal(np.ones(100)), "float32")
        with pytest.raises(ValueError, match="excerpt"):
            make_noise(f"file:{tmp_path / 'n.wav'}", 200, 0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_noise("pink", 100, 0)


class TestMix:
    def test_equal_power_at_zero_db(self, rng):
        x = TimeSignal(rng.standard_normal(1000))
        y = TimeSignal(x.samples[::-1].copy())
        scaled, achieved = mix_at_snr(x, y, 0.0)
        np.testing.assert_allclose(scaled.samples, y.samples, rtol=1e-12)

    @pytest.mark.parametrize("snr", [-30.0, -7.5, 0.0, 12.0, 30.0])
    def test_achieved_snr(self, speech, snr):
        noise = make_noise("white", len(speech), 1)
        scaled, achieved = mix_at_snr(speech, noise, snr)
        measured = 10 * np.log10(speech.power / scaled.power)
        assert abs(measured - snr) <= 0.01 and abs(achieved - snr) <= 0.01

    def test_scale_at_minus_30(self, rng):
        x = TimeSignal(rng.standard_normal(1000))
        y = TimeSignal(0.5 * rng.standard_normal(1000))
        scaled, _ = mix_at_snr(x, y, -30.0)
        assert scaled.power / y.power == pytest.approx(1000 * x.power / y.power)

    def test_silent_speech(self):
        with pytest.raises(ValueError, match="silent"):
            mix_at_snr(TimeSignal(np.zeros(10)), TimeSignal(np.ones(10)), 0.0)


class TestTrial:
    def test_no_target_is_round_trip(self, speech_wav, tmp_path):
        spec = TrialSpec(str(speech_wav), "white", 0.0, 0.0, seed=5)
        res = run_trial(spec, tmp_path / "out", "float64")
        expected = synthesize(analyze(res.clean))
        assert np.array_equal(res.processed.samples, expected.samples)
        assert res.report.mse_penalty == 0.0 and res.report.power_increase_db == 0.0
        written = load_wav(tmp_path / "out" / wav_name("white", 0.0, 0.0, 0))
        assert np.array_equal(written.samples, expected.samples)

    def test_noise_untouched(self, speech_wav):
        spec = TrialSpec(str(speech_wav), "white", -20.0, 0.7, seed=1)
        res = run_trial(spec)
        clean = pad_speech(load_wav(speech_wav))
        scaled, _ = mix_at_snr(clean, make_noise("white", len(clean), 1), -20.0)
        assert np.array_equal(res.noise.samples, scaled.samples)
        assert np.array_equal(res.listener.samples, res.processed.samples + scaled.samples)

    def test_low_snr_meets_target(self, speech_wav):
        res = run_trial(TrialSpec(str(speech_wav), "white", -30.0, 0.7, seed=2))
        assert res.report.limiter_bands == 0
        assert res.report.asii >= 0.7 - 1e-12

    def test_high_snr_follows_unprocessed(self, speech_wav):
        res = run_trial(TrialSpec(str(speech_wav), "white", 30.0, 0.7, seed=2))
        assert np.all(res.plan.bin_gains == 1.0)
        assert res.report.asii == res.report.asii_unprocessed

    def test_determinism(self, speech_wav):
        spec = TrialSpec(str(speech_wav), "speech_shaped", -5.0, 0.5, seed=8)
        a, b = run_trial(spec), run_trial(spec)
        assert a.row() == b.row()
        assert np.array_equal(a.listener.samples, b.listener.samples)

    def test_diagnostics_csv(self, speech_wav, tmp_path):
        run_trial(TrialSpec(str(speech_wav), "white", 0.0, 0.7), diagnostics=tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0].startswith("band,center_hz,speech_band_power,noise_band_power")
        assert len(lines) == 31


class TestSweep:
    def test_single_cell_matches_trial(self, speech_wav, tmp_path):
        grid = SweepGrid(["white"], [-5.0], [0.7], 1, [str(speech_wav)], master_seed=4)
        rows = run_sweep(grid, out_csv=tmp_path / "s.csv")
        assert len(rows) == 1
        from mpnle.harness import trial_seed
        direct = run_trial(TrialSpec(str(speech_wav), "white", -5.0, 0.7,
                                     trial_seed(4, "white", 0)))
        assert rows[0] == direct.row()

    def test_csv_header_and_means(self, tmp_path):
        grid = SweepGrid(["white", "speech_shaped"], [-10.0, 10.0], [0.0, 0.7], 2)
        rows = run_sweep(grid, out_csv=tmp_path / "s.csv")
        text = (tmp_path / "s.csv").read_text().splitlines()
        assert text[0].startswith("# mpnle-sweep/1")
        assert len(read_rows(tmp_path / "s.csv")) == 16
        means = read_rows(means_path(tmp_path / "s.csv"))
        assert len(means) == 8
        for mean in means:
            members = [r for r in rows if (r["noise"], r["snr_db"], r["astar"])
                       == (mean["noise"], mean["snr_db"], mean["astar"])]
            assert mean["asii"] == pytest.approx(np.mean([m["asii"] for m in members]),
                                                 rel=1e-15)

    def test_parallel_matches_serial(self, tmp_path):
        grid = SweepGrid(["white"], [-10.0, 0.0], [0.5], 3)
        run_sweep(grid, out_csv=tmp_path / "a.csv")
        run_sweep(grid, out_csv=tmp_path / "b.csv", jobs=2)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_partial_rows_flushed(self, tmp_path):
        grid = SweepGrid(["white", "file:/nonexistent.wav"], [0.0], [0.5], 1)
        with pytest.raises(Exception):
            run_sweep(grid, out_csv=tmp_path / "s.csv")
        assert len(read_rows(tmp_path / "s.csv")) == 1


def test_synthetic_speech_is_deterministic():
    a, b = synthetic_speech(seed=1), synthetic_speech(seed=1)
    assert np.array_equal(a.samples, b.samples)
    assert a.power == pytest.approx(0.05**2)


class TestCli:
    def test_trial(self, speech_wav, tmp_path, capsys):
        code = cli.main(["trial", "--speech", str(speech_wav), "--snr", "-10",
                         "--out-dir", str(tmp_path), "--diagnostics", str(tmp_path / "d.csv"),
                         "--plot"])
        assert code == 0
        assert "ASII" in capsys.readouterr().out
        assert (tmp_path / wav_name("white", -10.0, 0.7, 0)).exists()
        assert (tmp_path / "gains.png").exists()

    def test_sweep_writes_csv_and_figure(self, tmp_path):
        code = cli.main(["sweep", "--snr=-10:10:10", "--astar", "0,0.7", "--trials", "1",
                         "--out-dir", str(tmp_path), "--write-wavs"])
        assert code == 0
        assert (tmp_path / "sweep.csv").exists() and (tmp_path / "sweep_means.csv").exists()
        assert (tmp_path / "sweep_white.png").stat().st_size > 0
        assert len(list((tmp_path / "wav").glob("*.wav"))) == 6
        assert cli.main(["plot", str(tmp_path / "sweep.csv"),
                         "--out", str(tmp_path / "p.png")]) == 0

    def test_dump_weights(self, tmp_path, weights):
        assert cli.main(["dump-weights", "--out", str(tmp_path / "w.csv")]) == 0
        data = np.loadtxt(tmp_path / "w.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 1:], weights.omega, rtol=1e-15)

    def test_oracle_check(self, capsys):
        assert cli.main(["oracle-check", "--instances", "200"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_config_file(self, tmp_path, speech_wav):
        (tmp_path / "c.json").write_text('{"target_asii": 0.0}')
        assert cli.main(["trial", "--speech", str(speech_wav), "--config",
                         str(tmp_path / "c.json"), "--astar", "0",
                         "--out-dir", str(tmp_path)]) == 0

    def test_bad_input_exit_code(self, tmp_path, capsys):
        wavfile.write(tmp_path / "a.wav", 8000, np.zeros(8000, dtype=np.int16))
        code = cli.main(["trial", "--speech", str(tmp_path / "a.wav"), "--out-dir",
                         str(tmp_path)])
        assert code != 0
        assert "expected 16000 Hz" in capsys.readouterr().err

    def test_make_speech(self, tmp_path):
        assert cli.main(["make-speech", str(tmp_path / "s.wav")]) == 0
        assert len(load_wav(tmp_path / "s.wav")) == 40000

    def test_value_parsing(self):
        assert cli.parse_values("-30:30:5") == [float(x) for x in range(-30, 31, 5)]
        assert cli.parse_values("0,0.3,0.7") == [0.0, 0.3, 0.7]
