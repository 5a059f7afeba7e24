"""Synthetic multi-sensor transient event generator.

Produces labeled three-phase voltage windows for five event classes
(line energization, capacitor bank energization, fault, lightning and
high-impedance fault) as seen by a row of time-synchronized recorders.
Each event is a balanced 60 Hz carrier plus a class-specific transient
injected at t=0 and observed at every sensor after that sensor's
propagation delay and amplitude attenuation.

Everything is deterministic: a record is a pure function of
(params, layout, seed), and datasets derive per-record seeds from a
master seed plus the record index.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

CARRIER_HZ = 60.0

RECORD_MAGIC = b"EMTE"
RECORD_FORMAT_VERSION = 1
MANIFEST_VERSION = 1

DEFAULT_NOISE_SIGMA = 0.002
DEFAULT_SAMPLE_RATE_HZ = 20_000.0
DEFAULT_SPLIT_FRACTION = 0.8

# A sensor never sits farther than this fraction of the window from the
# source, otherwise the transient would fall outside the recording.
MAX_DELAY_FRACTION = 0.10

# Amplitude lost per unit of normalized distance between a sensor and the
# event source. Sensor positions are inferred from their delays, so two
# sensors with equal delays always see identical distance scaling.
ATTENUATION_SLOPE = 0.35


class EventClass(IntEnum):
    """The five event classes. Integer codes are stable across record
    files, manifests and reports."""

    LINE_ENERGIZATION = 1
    CAP_BANK_ENERGIZATION = 2
    FAULT = 3
    LIGHTNING = 4
    HIGH_IMPEDANCE_FAULT = 5


class FaultType(Enum):
    ONE_PHASE_GROUND = "1g"
    TWO_PHASE_GROUND = "2g"
    THREE_PHASE = "3g"


# Parameter grids. Structurally faithful to a varied-scenario corpus:
# point-on-wave angles and event locations are sampled finely enough to
# behave as continuous, while breaker delay count, fault resistances,
# surge currents and the HIF resistance set stay small and discrete.
DEFAULT_GRIDS: dict[str, tuple[float, ...]] = {
    "switching_instant": tuple(2.0 * math.pi * k / 64 for k in range(64)),
    "sync_delay": (0.0, 1.0e-3, 2.0e-3, 3.0e-3),
    "cap_size": tuple(0.5e-6 * (10.0 / 0.5) ** (k / 23) for k in range(24)),
    "fault_resistance": (0.1, 5.0),
    "inception_angle": tuple(math.pi * k / 12 for k in range(24)),
    "surge_current": (30e3, 100e3),
    "hif_resistance": (80.0, 120.0, 160.0, 220.0, 280.0, 350.0),
    "source_location": tuple(k / 200 for k in range(201)),
}

# Transient waveshape constants, one table for all classes. Amplitudes are
# balanced so the four non-lightning classes produce comparable high-band
# wavelet energy while lightning dominates by more than an order of
# magnitude (see tests/test_acceptance.py).
WAVESHAPE: dict[str, float] = {
    "energize_step_amp": 0.12,
    "energize_step_tau": 6.0e-3,
    "energize_ring_amp": 0.45,
    "energize_ring_hz": 2400.0,
    "energize_ring_tau": 2.5e-3,
    "energize_burst_amp": 0.25,
    "energize_burst_tau": 0.7e-3,
    "cap_ring_amp": 0.65,
    "cap_ring_tau": 2.2e-3,
    "cap_source_henry": 1.0e-3,
    "fault_collapse_ref_ohm": 2.0,
    "fault_collapse_tau": 0.8e-3,
    "fault_burst_amp": 0.26,
    "fault_burst_tau": 1.1e-3,
    "surge_pu_per_amp": 2.0e-4,
    "surge_rise_tau": 2.0e-5,
    "surge_fall_tau": 1.6e-3,
    "hif_source_ohm": 14.0,
    "hif_build_tau_lo": 3.0e-3,
    "hif_build_tau_hi": 12.0e-3,
    "hif_crossing_burst_amp": 0.35,
    "hif_crossing_burst_tau": 0.5e-3,
    "hif_gain_jitter": 0.15,
    "burst_components": 12,
    "burst_band_lo_hz": 3000.0,
    "burst_band_hi_hz": 9500.0,
    # Time for a wavefront to traverse the whole normalized network. A
    # sensor at normalized position p sees an event at location s only
    # after its own base delay plus propagation_seconds * |p - s|.
    "propagation_seconds": 1.0e-3,
}

_PHASE_SHIFT = np.array([0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0])


def window_samples_for(sample_rate_hz: float) -> int:
    """Two fundamental cycles, rounded half up. 667 samples at 20 kHz."""
    return int(2.0 * sample_rate_hz / CARRIER_HZ + 0.5)


@dataclass(frozen=True)
class SensorLayout:
    """Recorder placement: per-sensor propagation delay and attenuation.

    window_samples is always two fundamental cycles at the layout's
    sample rate; use :func:`make_layout` rather than filling it by hand.
    """

    sensor_ids: tuple[str, ...]
    delays: tuple[float, ...]
    attenuations: tuple[float, ...]
    sample_rate_hz: float
    window_samples: int

    def __post_init__(self):
        if not self.sensor_ids:
            raise ValueError("layout needs at least one sensor")
        if len(set(self.sensor_ids)) != len(self.sensor_ids):
            raise ValueError("sensor ids must be unique")
        if len(self.delays) != len(self.sensor_ids) or len(self.attenuations) != len(self.sensor_ids):
            raise ValueError("delays and attenuations must match sensor_ids in length")
        if any(d < 0 for d in self.delays):
            raise ValueError("delays must be >= 0")
        if any(not (0.0 < a <= 1.0) for a in self.attenuations):
            raise ValueError("attenuations must lie in (0, 1]")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.window_samples != window_samples_for(self.sample_rate_hz):
            raise ValueError("window_samples must equal two fundamental cycles")

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_ids)

    @property
    def window_seconds(self) -> float:
        return self.window_samples / self.sample_rate_hz

    def index_of(self, sensor_id: str) -> int:
        try:
            return self.sensor_ids.index(sensor_id)
        except ValueError:
            raise DataError(f"unknown sensor id {sensor_id!r}") from None


def make_layout(
    sensor_ids,
    delays,
    attenuations,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> SensorLayout:
    return SensorLayout(
        sensor_ids=tuple(str(s) for s in sensor_ids),
        delays=tuple(float(d) for d in delays),
        attenuations=tuple(float(a) for a in attenuations),
        sample_rate_hz=float(sample_rate_hz),
        window_samples=window_samples_for(float(sample_rate_hz)),
    )


def default_layout(n_sensors: int, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SensorLayout:
    """Evenly spread sensors: delays 0..1.2 ms, attenuations 1.0..0.7."""
    if n_sensors < 1:
        raise ValueError("n_sensors must be >= 1")
    if n_sensors == 1:
        delays = [0.0]
        attens = [1.0]
    else:
        delays = [1.2e-3 * i / (n_sensors - 1) for i in range(n_sensors)]
        attens = [1.0 - 0.3 * i / (n_sensors - 1) for i in range(n_sensors)]
    ids = [f"s{i + 1:02d}" for i in range(n_sensors)]
    return make_layout(ids, delays, attens, sample_rate_hz)


@dataclass(frozen=True)
class EventParams:
    """Event parameters. Only the fields relevant to event_class are set;
    every other field stays None."""

    event_class: EventClass
    source_location: float
    switching_instant: float | None = None
    sync_delay: float | None = None
    cap_size: float | None = None
    fault_type: FaultType | None = None
    fault_resistance: float | None = None
    inception_angle: float | None = None
    surge_current: float | None = None
    hif_ra: float | None = None
    hif_rb: float | None = None

    _FIELDS_BY_CLASS = {
        EventClass.LINE_ENERGIZATION: ("switching_instant", "sync_delay"),
        EventClass.CAP_BANK_ENERGIZATION: ("switching_instant", "cap_size"),
        EventClass.FAULT: ("fault_type", "fault_resistance", "inception_angle"),
        EventClass.LIGHTNING: ("surge_current",),
        EventClass.HIGH_IMPEDANCE_FAULT: ("hif_ra", "hif_rb", "inception_angle"),
    }

    def validate(self) -> None:
        if not 0.0 <= self.source_location <= 1.0:
            raise ValueError("source_location must lie in [0, 1]")
        wanted = set(self._FIELDS_BY_CLASS[self.event_class])
        optional = ("switching_instant", "sync_delay", "cap_size", "fault_type",
                    "fault_resistance", "inception_angle", "surge_current",
                    "hif_ra", "hif_rb")
        for name in optional:
            value = getattr(self, name)
            if name in wanted and value is None:
                raise ValueError(f"{self.event_class.name} requires {name}")
            if name not in wanted and value is not None:
                raise ValueError(f"{name} is not a {self.event_class.name} parameter")


def sample_params(
    event_class: EventClass,
    rng: np.random.Generator,
    grids: dict[str, tuple[float, ...]] | None = None,
) -> EventParams:
    """Draw event parameters uniformly from the class's discrete grids.

    The caller owns (and has seeded) `rng`. Draw order per class is fixed,
    so a given generator state always yields the same parameters.
    """
    g = dict(DEFAULT_GRIDS)
    if grids:
        g.update(grids)

    def pick(key):
        values = g[key]
        return float(values[int(rng.integers(len(values)))])

    kwargs: dict = {}
    if event_class is EventClass.LINE_ENERGIZATION:
        kwargs["switching_instant"] = pick("switching_instant")
        kwargs["sync_delay"] = pick("sync_delay")
    elif event_class is EventClass.CAP_BANK_ENERGIZATION:
        kwargs["switching_instant"] = pick("switching_instant")
        kwargs["cap_size"] = pick("cap_size")
    elif event_class is EventClass.FAULT:
        kinds = tuple(FaultType)
        kwargs["fault_type"] = kinds[int(rng.integers(len(kinds)))]
        kwargs["fault_resistance"] = pick("fault_resistance")
        kwargs["inception_angle"] = pick("inception_angle")
    elif event_class is EventClass.LIGHTNING:
        kwargs["surge_current"] = pick("surge_current")
    elif event_class is EventClass.HIGH_IMPEDANCE_FAULT:
        kwargs["hif_ra"] = pick("hif_resistance")
        kwargs["hif_rb"] = pick("hif_resistance")
        kwargs["inception_angle"] = pick("inception_angle")
    else:  # pragma: no cover
        raise ValueError(f"unknown event class {event_class!r}")

    params = EventParams(
        event_class=event_class,
        source_location=pick("source_location"),
        **kwargs,
    )
    params.validate()
    return params


@dataclass
class EventRecord:
    """One labeled event: voltages[L sensors, 3 phases, S samples] in pu.

    params is None for records loaded back from disk (the binary record
    format keeps only the label and the seed).
    """

    label: EventClass
    params: EventParams | None
    layout: SensorLayout
    voltages: np.ndarray
    seed: int

    def validate(self) -> None:
        L = self.layout.n_sensors
        S = self.layout.window_samples
        if self.voltages.shape != (L, 3, S):
            raise ValueError(f"voltages shape {self.voltages.shape} != ({L}, 3, {S})")
        if not np.all(np.isfinite(self.voltages)):
            raise ValueError("voltages contain non-finite values")


def _burst_components(rng: np.random.Generator, sample_rate_hz: float, shape: dict):
    """Random damped-sinusoid mixture used as a broadband transient burst.

    Continuous in time, so every sensor samples the same waveform at its
    own delay. Amplitudes are normalized to unit RMS at burst start.
    """
    n = int(shape["burst_components"])
    # at low sample rates the whole band folds down under Nyquist
    f_hi = min(shape["burst_band_hi_hz"], 0.48 * sample_rate_hz)
    f_lo = min(shape["burst_band_lo_hz"], 0.5 * f_hi)
    freqs = rng.uniform(f_lo, f_hi, n)
    phases = rng.uniform(0.0, 2.0 * math.pi, n)
    amps = rng.uniform(0.5, 1.0, n)
    amps = amps * math.sqrt(2.0 / float(np.sum(amps**2)))
    return freqs, phases, amps


def _eval_burst(components, tau: np.ndarray, decay_tau: float) -> np.ndarray:
    """Evaluate a burst at offsets tau (any shape); exactly 0 where tau < 0."""
    freqs, phases, amps = components
    live = tau >= 0.0
    t = np.where(live, tau, 0.0)
    acc = np.zeros_like(tau)
    for f, p, a in zip(freqs, phases, amps):
        acc += a * np.sin(2.0 * math.pi * f * t + p)
    return np.where(live, acc * np.exp(-t / decay_tau), 0.0)


def _damped_ring(tau: np.ndarray, freq_hz: float, decay_tau: float) -> np.ndarray:
    live = tau >= 0.0
    t = np.where(live, tau, 0.0)
    return np.where(live, np.sin(2.0 * math.pi * freq_hz * t) * np.exp(-t / decay_tau), 0.0)


def _faulted_phases(fault_type: FaultType) -> tuple[int, ...]:
    if fault_type is FaultType.ONE_PHASE_GROUND:
        return (0,)
    if fault_type is FaultType.TWO_PHASE_GROUND:
        return (0, 1)
    return (0, 1, 2)


def synthesize_event(
    params: EventParams,
    layout: SensorLayout,
    seed: int,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    waveshape: dict[str, float] | None = None,
) -> EventRecord:
    """Render one event as voltages[L, 3, S].

    Pure function of its arguments: the same (params, layout, seed) always
    reproduces the same voltages bit for bit. The transient starts at t=0
    at the source; sensor i sees it from its onset time
    delays[i] + propagation_seconds * |position_i - source_location|
    on, scaled by its attenuation and by the same normalized distance.
    With noise_sigma = 0, samples before a sensor's delay (and a fortiori
    before its onset) equal the analytic carrier exactly.
    """
    params.validate()
    shape = dict(WAVESHAPE)
    if waveshape:
        shape.update(waveshape)

    max_delay = max(layout.delays)
    if max_delay > MAX_DELAY_FRACTION * layout.window_seconds:
        raise ValueError(
            f"max sensor delay {max_delay:.6f}s exceeds "
            f"{MAX_DELAY_FRACTION:.0%} of the window ({layout.window_seconds:.6f}s)"
        )

    rng = np.random.default_rng(seed)
    L = layout.n_sensors
    S = layout.window_samples
    omega = 2.0 * math.pi * CARRIER_HZ
    t = np.arange(S, dtype=np.float64) / layout.sample_rate_hz

    # Carrier phase at t=0 comes from the event's own angle parameter where
    # one exists; lightning has none, so it draws one.
    cls = params.event_class
    if cls in (EventClass.LINE_ENERGIZATION, EventClass.CAP_BANK_ENERGIZATION):
        phi0 = float(params.switching_instant)
    elif cls in (EventClass.FAULT, EventClass.HIGH_IMPEDANCE_FAULT):
        phi0 = float(params.inception_angle)
    else:
        phi0 = float(rng.uniform(0.0, 2.0 * math.pi))

    carrier = np.sin(omega * t[None, :] + phi0 + _PHASE_SHIFT[:, None])  # [3, S]

    delays = np.asarray(layout.delays, dtype=np.float64)
    attens = np.asarray(layout.attenuations, dtype=np.float64)
    positions = delays / max_delay if max_delay > 0 else np.zeros(L)
    distance = np.abs(positions - params.source_location)
    onset = delays + shape["propagation_seconds"] * distance
    if float(onset.max()) > MAX_DELAY_FRACTION * layout.window_seconds:
        raise ValueError(
            f"worst-case onset {onset.max():.6f}s (delay + propagation) exceeds "
            f"{MAX_DELAY_FRACTION:.0%} of the window ({layout.window_seconds:.6f}s)"
        )
    gain = attens * (1.0 - ATTENUATION_SLOPE * distance)
    tau = t[None, :] - onset[:, None]  # [L, S], negative before onset

    additive = np.zeros((L, 3, S))
    scale = np.ones((L, 3, S))

    if cls is EventClass.LINE_ENERGIZATION:
        burst = _burst_components(rng, layout.sample_rate_hz, shape)
        d = float(params.sync_delay)
        for pole in range(3):
            tau_p = tau - pole * d
            closing_angle = phi0 + omega * pole * d + _PHASE_SHIFT[pole]
            amp = math.sin(closing_angle)
            wave = (
                amp * shape["energize_step_amp"] * np.where(tau_p >= 0, np.exp(-np.maximum(tau_p, 0.0) / shape["energize_step_tau"]), 0.0)
                + amp * shape["energize_ring_amp"] * _damped_ring(tau_p, shape["energize_ring_hz"], shape["energize_ring_tau"])
                + abs(amp) * shape["energize_burst_amp"] * _eval_burst(burst, tau_p, shape["energize_burst_tau"])
            )
            additive[:, pole, :] = wave

    elif cls is EventClass.CAP_BANK_ENERGIZATION:
        ring_hz = 1.0 / (2.0 * math.pi * math.sqrt(shape["cap_source_henry"] * float(params.cap_size)))
        ring_hz = min(ring_hz, 0.48 * layout.sample_rate_hz)
        for ph in range(3):
            amp = math.sin(phi0 + _PHASE_SHIFT[ph])
            additive[:, ph, :] = amp * shape["cap_ring_amp"] * _damped_ring(tau, ring_hz, shape["cap_ring_tau"])

    elif cls is EventClass.FAULT:
        burst = _burst_components(rng, layout.sample_rate_hz, shape)
        depth = shape["fault_collapse_ref_ohm"] / (shape["fault_collapse_ref_ohm"] + float(params.fault_resistance))
        ramp = np.where(tau >= 0, 1.0 - np.exp(-np.maximum(tau, 0.0) / shape["fault_collapse_tau"]), 0.0)
        wave = shape["fault_burst_amp"] * _eval_burst(burst, tau, shape["fault_burst_tau"])
        for ph in _faulted_phases(params.fault_type):
            scale[:, ph, :] = 1.0 - depth * gain[:, None] * ramp
            additive[:, ph, :] = wave

    elif cls is EventClass.LIGHTNING:
        struck = int(rng.integers(3))
        amp = shape["surge_pu_per_amp"] * float(params.surge_current)
        live = tau >= 0.0
        tt = np.where(live, tau, 0.0)
        surge = np.where(
            live,
            amp * (np.exp(-tt / shape["surge_fall_tau"]) - np.exp(-tt / shape["surge_rise_tau"])),
            0.0,
        )
        additive[:, struck, :] = surge

    else:  # HIGH_IMPEDANCE_FAULT
        faulted = int(rng.integers(3))
        build_tau = float(rng.uniform(shape["hif_build_tau_lo"], shape["hif_build_tau_hi"]))
        n_cells = int(layout.window_seconds * 2 * CARRIER_HZ) + 4
        jitter = rng.uniform(-shape["hif_gain_jitter"], shape["hif_gain_jitter"], n_cells)
        burst = _burst_components(rng, layout.sample_rate_hz, shape)
        n_cross = n_cells + 2
        cross_amp = rng.uniform(0.6, 1.0, n_cross)

        v_ph = carrier[faulted]  # source-side voltage of the faulted phase, [S]
        conduct = np.where(v_ph > 0, 1.0 / float(params.hif_ra), 1.0 / float(params.hif_rb))
        distortion_src = -shape["hif_source_ohm"] * v_ph * conduct  # [S]

        live = tau >= 0.0
        tt = np.where(live, tau, 0.0)
        cell = np.minimum((tt * 2 * CARRIER_HZ).astype(np.int64), n_cells - 1)
        buildup = np.where(live, (1.0 - np.exp(-tt / build_tau)) * (1.0 + jitter[cell]), 0.0)
        additive[:, faulted, :] = distortion_src[None, :] * buildup

        # Arc reignition burst at each zero crossing of the faulted phase.
        crossing_phase = phi0 + _PHASE_SHIFT[faulted]
        first_k = math.ceil(crossing_phase / math.pi)
        for j in range(n_cross):
            t_cross = ((first_k + j) * math.pi - crossing_phase) / omega
            if t_cross > layout.window_seconds:
                break
            grow = 1.0 - math.exp(-max(t_cross, 0.0) / build_tau)
            amp = shape["hif_crossing_burst_amp"] * cross_amp[j] * grow
            additive[:, faulted, :] += amp * _eval_burst(burst, tau - t_cross, shape["hif_crossing_burst_tau"])

    volts = carrier[None, :, :] * scale + gain[:, None, None] * additive
    if noise_sigma > 0.0:
        volts = volts + rng.normal(0.0, noise_sigma, size=(L, 3, S))

    record = EventRecord(label=cls, params=params, layout=layout, voltages=volts, seed=int(seed))
    record.validate()
    return record


# ---------------------------------------------------------------------------
# Record files and dataset manifests
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sBBHIdQ")  # magic, version, class, L, S, rate, seed


def write_record(record: EventRecord, path: str | Path) -> None:
    """Binary record: 28-byte header + float32 little-endian payload,
    sensor-major then phase then time."""
    record.validate()
    path = Path(path)
    header = _HEADER.pack(
        RECORD_MAGIC,
        RECORD_FORMAT_VERSION,
        int(record.label),
        record.layout.n_sensors,
        record.layout.window_samples,
        record.layout.sample_rate_hz,
        record.seed,
    )
    payload = np.ascontiguousarray(record.voltages, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def read_record(path: str | Path, layout: SensorLayout | None = None) -> EventRecord:
    """Read a record file back. params is not stored and comes back None."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated record header")
    magic, version, cls_code, L, S, rate, seed = _HEADER.unpack_from(raw)
    if magic != RECORD_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != RECORD_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported record version {version}")
    expected = _HEADER.size + L * 3 * S * 4
    if len(raw) != expected:
        raise DataError(f"{path}: payload size {len(raw)} != {expected}")
    volts = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    volts = volts.reshape(L, 3, S)
    if layout is None:
        layout = default_layout(L, rate) if L > 1 else make_layout(["s01"], [0.0], [1.0], rate)
    if layout.n_sensors != L or layout.window_samples != S:
        raise DataError(f"{path}: layout does not match record dimensions")
    return EventRecord(
        label=EventClass(cls_code),
        params=None,
        layout=layout,
        voltages=volts,
        seed=int(seed),
    )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


@dataclass
class GeneratorConfig:
    """Dataset build settings: per-class counts, layout, noise, grids."""

    counts: dict[EventClass, int]
    layout: SensorLayout
    out_dir: str
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    split_fraction: float = DEFAULT_SPLIT_FRACTION
    grids: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def validate(self) -> None:
        if set(self.counts) != set(EventClass):
            raise ValueError("counts must name every event class")
        for cls, n in self.counts.items():
            if n <= 0:
                raise ValueError(f"count for {cls.name} must be positive")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class DatasetManifest:
    version: int
    classes: dict[EventClass, int]
    layout: SensorLayout
    split_fraction: float
    master_seed: int
    noise_sigma: float
    records: list[dict]  # {"file", "class", "seed", "sha256"}

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "classes": {str(int(c)): n for c, n in sorted(self.classes.items())},
            "layout": {
                "sensor_ids": list(self.layout.sensor_ids),
                "delays": list(self.layout.delays),
                "attenuations": list(self.layout.attenuations),
                "sample_rate_hz": self.layout.sample_rate_hz,
                "window_samples": self.layout.window_samples,
            },
            "split_fraction": self.split_fraction,
            "master_seed": self.master_seed,
            "noise_sigma": self.noise_sigma,
            "records": self.records,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataError(f"manifest is not valid JSON: {e}") from e
        if doc.get("version") != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version {doc.get('version')}")
        lay = doc["layout"]
        layout = make_layout(
            lay["sensor_ids"], lay["delays"], lay["attenuations"], lay["sample_rate_hz"]
        )
        return cls(
            version=doc["version"],
            classes={EventClass(int(k)): int(v) for k, v in doc["classes"].items()},
            layout=layout,
            split_fraction=float(doc["split_fraction"]),
            master_seed=int(doc["master_seed"]),
            noise_sigma=float(doc["noise_sigma"]),
            records=list(doc["records"]),
        )


def build_dataset(config: GeneratorConfig, master_seed: int) -> DatasetManifest:
    """Generate every record, write one file per event plus a manifest.

    Record seeds are master_seed + sequential index, so rebuilding with the
    same master seed reproduces every file byte for byte.
    """
    config.validate()
    out = Path(config.out_dir)
    rec_dir = out / "records"
    rec_dir.mkdir(parents=True, exist_ok=True)

    records: list[dict] = []
    index = 0
    for cls in sorted(config.counts, key=int):
        for _ in range(config.counts[cls]):
            rec_seed = master_seed + index
            param_rng = np.random.default_rng(
                np.random.SeedSequence(entropy=rec_seed, spawn_key=(1,))
            )
            params = sample_params(cls, param_rng, config.grids or None)
            record = synthesize_event(params, config.layout, rec_seed, config.noise_sigma)
            rel = f"records/ev_{index:06d}.emte"
            write_record(record, out / rel)
            records.append(
                {
                    "file": rel,
                    "class": int(cls),
                    "seed": rec_seed,
                    "sha256": _sha256(out / rel),
                }
            )
            index += 1

    manifest = DatasetManifest(
        version=MANIFEST_VERSION,
        classes=dict(config.counts),
        layout=config.layout,
        split_fraction=config.split_fraction,
        master_seed=int(master_seed),
        noise_sigma=config.noise_sigma,
        records=records,
    )
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    return DatasetManifest.from_json(path.read_text())


def load_records(
    manifest: DatasetManifest, root: str | Path, verify: bool = True
) -> list[EventRecord]:
    """Load every record named by the manifest, checking checksums."""
    root = Path(root)
    out = []
    for entry in manifest.records:
        p = root / entry["file"]
        if not p.exists():
            raise DataError(f"missing record file {p}")
        if verify and _sha256(p) != entry["sha256"]:
            raise DataError(f"checksum mismatch for {p}")
        rec = read_record(p, manifest.layout)
        if int(rec.label) != entry["class"]:
            raise DataError(f"label mismatch for {p}")
        out.append(rec)
    counted: dict[EventClass, int] = {}
    for rec in out:
        counted[rec.label] = counted.get(rec.label, 0) + 1
    if counted != manifest.classes:
        raise DataError("per-class record counts do not match the manifest")
    return out


# ---------------------------------------------------------------------------
# Plain-text generator config files
# ---------------------------------------------------------------------------

_CLASS_KEYS = {f"count.{c.name.lower()}": c for c in EventClass}
_GRID_KEYS = {
    "grid.switching_instant": "switching_instant",
    "grid.sync_delay": "sync_delay",
    "grid.cap_size": "cap_size",
    "grid.fault_resistance": "fault_resistance",
    "grid.inception_angle": "inception_angle",
    "grid.surge_current": "surge_current",
    "grid.hif_resistance": "hif_resistance",
    "grid.source_location": "source_location",
}


def parse_generator_config(path: str | Path, out_dir: str | None = None) -> GeneratorConfig:
    """Parse the documented key=value generator config (see README)."""
    from .config import parse_kv_file

    kv = parse_kv_file(path)
    try:
        counts: dict[EventClass, int] = {}
        for key, cls in _CLASS_KEYS.items():
            if key in kv:
                counts[cls] = int(kv.pop(key))
        if set(counts) != set(EventClass):
            missing = [k for k in _CLASS_KEYS if _CLASS_KEYS[k] not in counts]
            raise ConfigError(f"{path}: missing class counts: {', '.join(missing)}")

        rate = float(kv.pop("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ))
        if "sensor_ids" in kv:
            ids = [s.strip() for s in kv.pop("sensor_ids").split(",") if s.strip()]
            if "delays" in kv:
                delays = [float(x) for x in kv.pop("delays").split(",")]
            else:
                delays = list(default_layout(len(ids), rate).delays)
            if "attenuations" in kv:
                attens = [float(x) for x in kv.pop("attenuations").split(",")]
            else:
                attens = list(default_layout(len(ids), rate).attenuations)
            layout = make_layout(ids, delays, attens, rate)
        else:
            layout = default_layout(int(kv.pop("sensors", 5)), rate)

        grids: dict[str, tuple[float, ...]] = {}
        for key, name in _GRID_KEYS.items():
            if key in kv:
                grids[name] = tuple(float(x) for x in kv.pop(key).split(","))

        config = GeneratorConfig(
            counts=counts,
            layout=layout,
            out_dir=out_dir if out_dir is not None else kv.pop("out_dir", "."),
            noise_sigma=float(kv.pop("noise_sigma", DEFAULT_NOISE_SIGMA)),
            split_fraction=float(kv.pop("split_fraction", DEFAULT_SPLIT_FRACTION)),
            grids=grids,
        )
        kv.pop("out_dir", None)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{path}: {e}") from e
    if kv:
        raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(kv))}")
    config.validate()
    return config
