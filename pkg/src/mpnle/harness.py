"""Trial and sweep orchestration: audio I/O, noise, mixing, scoring."""

from __future__ import annotations

import csv
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from .gains import GainPlan, NleConfig, plan_gains
from .metrics import MetricReport, score_plan
from .stft import SAMPLE_RATE, TimeSignal, analyze, apply_gains, synthesize

log = logging.getLogger(__name__)

LEAD_SILENCE = 0.5
TRAIL_SILENCE = 0.125

CSV_VERSION = "mpnle-sweep/1"
CSV_NOTE = "snr_db is measured over the full padded utterance, silence included"
KEY_COLUMNS = ["noise", "snr_db", "astar", "trial", "seed", "speech"]
METRIC_COLUMNS = [
    "asii", "asii_projected", "asii_unprocessed", "mse_penalty",
    "power_increase_db", "seg_snr_db", "limiter_bands", "infeasible_bands",
]
ROW_COLUMNS = KEY_COLUMNS + METRIC_COLUMNS + ["per_band_snr"]


# --- audio I/O --------------------------------------------------------------

def load_wav(path, sample_rate: int = SAMPLE_RATE) -> TimeSignal:
    rate, data = wavfile.read(path)
    if rate != sample_rate:
        raise ValueError(f"{path}: expected {sample_rate} Hz, got {rate} Hz")
    if data.ndim != 1:
        raise ValueError(f"{path}: unsupported format, expected mono audio")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(float) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(float)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return TimeSignal(samples, rate)


def save_wav(path, signal: TimeSignal, fmt: str = "float32") -> None:
    x = signal.samples
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "float64":
        data = x.astype(np.float64)
    elif fmt == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(path, signal.sample_rate, data)


# --- signals ----------------------------------------------------------------

def pad_speech(signal: TimeSignal) -> TimeSignal:
    """Add 0.5 s of leading and 0.125 s of trailing silence."""
    lead = int(round(LEAD_SILENCE * signal.sample_rate))
    trail = int(round(TRAIL_SILENCE * signal.sample_rate))
    return TimeSignal(np.pad(signal.samples, (lead, trail)), signal.sample_rate)


def synthetic_speech(duration: float = 2.5, seed: int = 0,
                     sample_rate: int = SAMPLE_RATE, rms: float = 0.05) -> TimeSignal:
    """Speech-like test signal: voiced syllables with moving formants and
    occasional fricative bursts.  Stands in for a recorded sentence."""
    rng = np.random.default_rng(seed)
    n = int(duration * sample_rate)
    out = np.zeros(n)
    t0 = int(0.05 * sample_rate)
    while t0 < n:
        length = int(rng.uniform(0.12, 0.30) * sample_rate)
        seg = min(length, n - t0)
        t = np.arange(seg) / sample_rate
        f0 = rng.uniform(95, 190) * (1.0 + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-3))
        phase = 2 * np.pi * np.cumsum(f0) / sample_rate
        formants = [rng.uniform(300, 850), rng.uniform(850, 2400), rng.uniform(2400, 3300)]
        voiced = np.zeros(seg)
        for h in range(1, int(7900 / f0.max()) + 1):
            fh = h * f0.mean()
            env = sum(1.0 / (1.0 + ((fh - fc) / (0.12 * fc + 60)) ** 2) for fc in formants)
            voiced += env / h * np.sin(h * phase)
        win = np.sin(np.pi * np.arange(seg) / seg) ** 2
        out[t0:t0 + seg] += voiced * win
        if rng.random() < 0.4:
            flen = min(int(rng.uniform(0.04, 0.10) * sample_rate), n - t0 - seg)
            if flen > 16:
                hiss = lfilter([1.0, -0.95], [1.0], rng.standard_normal(flen))
                start = t0 + seg
                out[start:start + flen] += 0.15 * hiss * np.hanning(flen)
        t0 += seg + int(rng.uniform(0.02, 0.12) * sample_rate)
    out *= rms / np.sqrt(np.mean(out**2))
    return TimeSignal(out, sample_rate)


def make_noise(kind: str, length: int, seed: int,
               speech: TimeSignal | None = None, config: NleConfig | None = None,
               sample_rate: int = SAMPLE_RATE) -> TimeSignal:
    """Noise of ``length`` samples.

    ``kind`` is ``white``, ``speech_shaped`` (needs ``speech``) or
    ``file:<path>`` for a random excerpt of a recording.
    """
    if length <= 0:
        raise ValueError("noise length must be positive")
    rng = np.random.default_rng(seed)
    if kind == "white":
        return TimeSignal(rng.standard_normal(length), sample_rate)
    if kind == "speech_shaped":
        if speech is None:
            raise ValueError("speech_shaped noise needs the speech signal")
        params = (config or NleConfig()).stft_params()
        white = analyze(TimeSignal(rng.standard_normal(length), sample_rate), params)
        target = np.abs(analyze(speech, params).coeffs) ** 2
        shape = np.sqrt(target.mean(axis=1) / (np.abs(white.coeffs) ** 2).mean(axis=1))
        shaped = synthesize(apply_gains(white, shape)).samples
        return TimeSignal(shaped / np.sqrt(np.mean(shaped**2)), sample_rate)
    if kind.startswith("file:"):
        recording = load_wav(kind[5:], sample_rate)
        if len(recording) < length:
            raise ValueError(
                f"noise file has {len(recording)} samples, excerpt needs {length}"
            )
        start = int(rng.integers(0, len(recording) - length + 1))
        return TimeSignal(recording.samples[start:start + length], sample_rate)
    raise ValueError(f"unknown noise kind {kind!r}")


def mix_at_snr(speech: TimeSignal, noise: TimeSignal, snr_db: float):
    """Scale ``noise`` so the full-signal SNR equals ``snr_db``.

    Returns the scaled noise and the SNR re-measured after scaling.
    """
    ps = speech.power
    pn = noise.power
    if ps <= 0:
        raise ValueError("speech is silent")
    if pn <= 0:
        raise ValueError("noise is silent")
    scale = np.sqrt(ps / (pn * 10.0 ** (snr_db / 10.0)))
    scaled = TimeSignal(noise.samples * scale, noise.sample_rate)
    achieved = 10.0 * np.log10(ps / scaled.power)
    return scaled, float(achieved)


# --- trials -----------------------------------------------------------------

@dataclass
class TrialSpec:
    speech_path: str | None
    noise_kind: str = "white"
    snr_db: float = 0.0
    target_asii: float = 0.7
    seed: int = 0
    config: NleConfig = field(default_factory=NleConfig)
    trial_index: int = 0
    speech: TimeSignal | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


@dataclass
class TrialResult:
    spec: TrialSpec
    report: MetricReport
    plan: GainPlan
    clean: TimeSignal
    processed: TimeSignal
    noise: TimeSignal
    listener: TimeSignal

    def row(self) -> dict:
        row = {
            "noise": self.spec.noise_kind,
            "snr_db": float(self.spec.snr_db),
            "astar": float(self.spec.target_asii),
            "trial": self.spec.trial_index,
            "seed": self.spec.seed,
            "speech": Path(self.spec.speech_path).name if self.spec.speech_path else "synthetic",
        }
        row.update(self.report.as_row())
        return row


def wav_name(noise_kind: str, snr_db: float, target: float, trial: int) -> str:
    noise = noise_kind.replace("file:", "file-").replace(os.sep, "_")
    return f"{noise}_{snr_db:g}dB_{target:g}_{trial}.wav"


def _clean_speech(spec: TrialSpec) -> TimeSignal:
    if spec.speech is not None:
        return spec.speech
    if spec.speech_path is None:
        raise ValueError("trial needs a speech path or signal")
    return load_wav(spec.speech_path, spec.config.sample_rate)


def evaluate(clean: TimeSignal, noise: TimeSignal, spec: TrialSpec) -> TrialResult:
    """Process padded clean speech against already-scaled noise and score it.

    Only the speech passes through the gain path; the noise is added as is.
    """
    config = spec.config.replace(target_asii=spec.target_asii)
    params = config.stft_params()
    speech_spec = analyze(clean, params)
    noise_spec = analyze(noise, params)
    plan = plan_gains(speech_spec, noise_spec, config)
    processed = synthesize(apply_gains(speech_spec, plan.bin_gains))
    listener = TimeSignal(processed.samples + noise.samples, clean.sample_rate)
    report = score_plan(plan, config.gamma, clean, listener)
    return TrialResult(spec, report, plan, clean, processed, noise, listener)


def prepare(spec: TrialSpec):
    clean = pad_speech(_clean_speech(spec))
    raw_noise = make_noise(spec.noise_kind, len(clean), spec.seed, speech=clean,
                           config=spec.config, sample_rate=clean.sample_rate)
    noise, _ = mix_at_snr(clean, raw_noise, spec.snr_db)
    return clean, noise


def run_trial(spec: TrialSpec, out_dir=None, wav_format: str = "float32",
              diagnostics=None) -> TrialResult:
    clean, noise = prepare(spec)
    result = evaluate(clean, noise, spec)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        name = wav_name(spec.noise_kind, spec.snr_db, spec.target_asii, spec.trial_index)
        save_wav(out_dir / name, result.processed, wav_format)
        save_wav(out_dir / ("listener_" + name), result.listener, wav_format)
    if diagnostics is not None:
        write_diagnostics(diagnostics, result.plan)
    return result


def write_diagnostics(path, plan: GainPlan) -> None:
    rows = list(plan.diagnostics_rows())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


# --- sweeps -----------------------------------------------------------------

def trial_seed(master_seed: int, noise_kind: str, trial: int) -> int:
    """Seed shared by every SNR and target of one (noise, trial) cell.

    Keeping the noise realization fixed across the SNR axis makes the sweep
    curves differ only by level, not by sampling noise.
    """
    seq = np.random.SeedSequence([master_seed, zlib.crc32(noise_kind.encode()), trial])
    return int(seq.generate_state(1)[0])


@dataclass
class SweepGrid:
    noise_kinds: list
    snrs: list
    targets: list
    n_trials: int = 3
    speech_paths: list = field(default_factory=list)
    master_seed: int = 0


def _run_cell(args):
    grid, config, noise_kind, trial, out_dir, wav_format = args
    seed = trial_seed(grid.master_seed, noise_kind, trial)
    if grid.speech_paths:
        path = grid.speech_paths[trial % len(grid.speech_paths)]
        base = TrialSpec(path, noise_kind, 0.0, 0.0, seed, config, trial)
    else:
        base = TrialSpec(None, noise_kind, 0.0, 0.0, seed, config, trial,
                         speech=synthetic_speech(seed=trial))
    clean = pad_speech(_clean_speech(base))
    raw_noise = make_noise(noise_kind, len(clean), seed, speech=clean, config=config,
                           sample_rate=clean.sample_rate)
    rows = []
    for snr in grid.snrs:
        noise, _ = mix_at_snr(clean, raw_noise, snr)
        for target in grid.targets:
            spec = TrialSpec(base.speech_path, noise_kind, snr, target, seed, config,
                             trial, base.speech)
            result = evaluate(clean, noise, spec)
            rows.append(result.row())
            if out_dir is not None:
                name = wav_name(noise_kind, snr, target, trial)
                save_wav(Path(out_dir) / name, result.processed, wav_format)
    return rows


def run_sweep(grid: SweepGrid, config: NleConfig | None = None, out_csv=None,
              jobs: int = 1, wav_dir=None, wav_format: str = "float32") -> list:
    """Run every (noise, trial) cell over all SNRs and targets.

    Rows come back sorted by noise, SNR, target and trial regardless of how
    many worker processes ran.  Rows finished before a failure are still
    written to ``out_csv``.
    """
    config = config or NleConfig()
    if wav_dir is not None:
        Path(wav_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(grid, config, kind, t, wav_dir, wav_format)
             for kind in grid.noise_kinds for t in range(grid.n_trials)]
    rows: list = []
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for cell in pool.map(_run_cell, tasks):
                    rows.extend(cell)
        else:
            for task in tasks:
                rows.extend(_run_cell(task))
    finally:
        order = {k: i for i, k in enumerate(grid.noise_kinds)}
        rows.sort(key=lambda r: (order[r["noise"]], r["snr_db"], r["astar"], r["trial"]))
        if out_csv is not None:
            write_rows(out_csv, rows)
            write_rows(means_path(out_csv), aggregate(rows), columns=MEAN_COLUMNS)
    return rows


MEAN_COLUMNS = ["noise", "snr_db", "astar", "n_trials"] + METRIC_COLUMNS


def aggregate(rows: list) -> list:
    """Per-(noise, SNR, target) means over trials, in first-seen order."""
    cells: dict = {}
    for row in rows:
        cells.setdefault((row["noise"], row["snr_db"], row["astar"]), []).append(row)
    out = []
    for (noise, snr, target), members in cells.items():
        mean = {"noise": noise, "snr_db": snr, "astar": target, "n_trials": len(members)}
        for col in METRIC_COLUMNS:
            mean[col] = float(np.mean([float(m[col]) for m in members]))
        out.append(mean)
    return out


def means_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_means" + path.suffix)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_rows(path, rows: list, columns: list = ROW_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_VERSION}; {CSV_NOTE}\n")
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n",
                                extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    rows = list(csv.DictReader(lines))
    for row in rows:
        for key, value in row.items():
            if key in ("noise", "speech", "per_band_snr"):
                continue
            row[key] = float(value)
    return rows
