"""Multi-domain time-series data: synthetic generation and CSV ingestion.

The synthetic benchmark builds each class from a seeded bank of sinusoids
plus a linear envelope; every domain then applies its own shift (amplitude
scale, frequency offset, channel-correlated noise, baseline offset). With
all shifts at zero the domains are exchangeable, which the statistical tests
rely on. Windowing follows the fixed start-at-zero stride rule and
standardization is always per domain, per feature.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError, ManifestError, ParseError
from .seeding import derive_rng

SIGMA_GUARD = 1e-8


@dataclass(frozen=True)
class DomainShift:
    """Per-domain distribution shift.

    baseline_offset scales a domain-fixed slow additive pattern (sensor
    baseline wander) shared by every window of the domain; corr_noise scales
    fresh per-window noise shared across channels.
    """

    amplitude_scale: float = 1.0
    frequency_offset: float = 0.0
    corr_noise: float = 0.0
    baseline_offset: float = 0.0

    def __post_init__(self):
        if self.amplitude_scale < 0 or self.corr_noise < 0:
            raise ConfigurationError("shift magnitudes must be nonnegative")

    def to_dict(self):
        return {
            "amplitude_scale": self.amplitude_scale,
            "frequency_offset": self.frequency_offset,
            "corr_noise": self.corr_noise,
            "baseline_offset": self.baseline_offset,
        }


@dataclass(frozen=True)
class SynthConfig:
    n_domains: int = 4
    n_classes: int = 3
    samples_per_domain: int = 120
    series_length: int = 32     # one generated sample is one window
    n_features: int = 3
    seed: int = 0
    shifts: tuple = ()          # per-domain DomainShift, defaults to no shift
    waves_per_class: int = 2
    phase_jitter: float = 0.15
    amp_jitter: float = 0.1
    sample_noise: float = 0.5

    def __post_init__(self):
        if self.n_domains < 2 or self.n_classes < 2:
            raise ConfigurationError("need at least 2 domains and 2 classes")
        shifts = tuple(self.shifts) or tuple(DomainShift() for _ in range(self.n_domains))
        if len(shifts) != self.n_domains:
            raise ConfigurationError(
                f"got {len(shifts)} shift entries for {self.n_domains} domains"
            )
        object.__setattr__(self, "shifts", shifts)


@dataclass(frozen=True)
class DomainData:
    domain_id: str
    windows: np.ndarray   # (n, T, F)
    labels: np.ndarray    # (n,) ints in [0, C)

    def __post_init__(self):
        windows = np.asarray(self.windows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        if windows.ndim != 3 or windows.shape[0] != labels.shape[0]:
            raise InputError("windows must be (n, T, F) aligned with labels")
        if windows.shape[0] == 0:
            raise InputError(f"domain {self.domain_id!r} is empty")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self):
        return self.windows.shape[0]


@dataclass(frozen=True)
class DomainDataset:
    domains: tuple          # of DomainData
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        domains = tuple(self.domains)
        if not domains:
            raise InputError("dataset has no domains")
        shape = domains[0].windows.shape[1:]
        for d in domains:
            if d.windows.shape[1:] != shape:
                raise InputError("all domains must share the window shape")
            if np.any(d.labels < 0) or np.any(d.labels >= self.n_classes):
                raise InputError(f"labels out of range in domain {d.domain_id!r}")
        object.__setattr__(self, "domains", domains)

    @property
    def window_shape(self):
        return self.domains[0].windows.shape[1:]

    @property
    def domain_ids(self):
        return [d.domain_id for d in self.domains]


def moderate_shift_preset(n_domains):
    """Benchmark preset: shifts grow across domains, so later domains are
    progressively further from the first. Frequency and correlated-noise
    shifts survive per-domain standardization; amplitude and baseline mostly
    do not, but they perturb the standardization statistics themselves."""
    return tuple(
        DomainShift(
            amplitude_scale=1.0 + 0.1 * i,
            frequency_offset=0.1 * i,
            corr_noise=0.25 * i,
            baseline_offset=1.2 * i,
        )
        for i in range(n_domains)
    )


def _class_wavebank(cfg: SynthConfig, label):
    """Seeded per-class waveform parameters, shared by all domains.

    Each class draws its frequencies from a disjoint band, so moderate
    domain-level frequency offsets move the distribution without swapping
    class identities.
    """
    rng = derive_rng(cfg.seed, "class_base", label)
    lo = 1.0 + 0.8 * label  # adjacent classes share part of their band
    freqs = rng.uniform(lo, lo + 1.6, size=(cfg.n_features, cfg.waves_per_class))
    amps = rng.uniform(0.5, 1.5, size=(cfg.n_features, cfg.waves_per_class))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.n_features, cfg.waves_per_class))
    slopes = 0.5 * rng.uniform(-1.0, 1.0, size=cfg.n_features)
    return freqs, amps, phases, slopes


def _domain_baseline_pattern(cfg: SynthConfig, domain_index):
    """Slow domain-specific wander, identical for every window of the
    domain and shared across channels (unit amplitude before scaling)."""
    rng = derive_rng(cfg.seed, "baseline_pattern", domain_index)
    t = np.arange(cfg.series_length) / cfg.series_length
    freqs = rng.uniform(0.3, 1.2, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    wave = np.sum(np.sin(2.0 * np.pi * freqs[None, :] * t[:, None] + phases[None, :]), axis=1)
    return (0.5 + wave / 3.0)[:, None]  # (T, 1), broadcasts over channels


def gen_synthetic(cfg: SynthConfig) -> DomainDataset:
    """Deterministic multi-domain benchmark; one sample is one window."""
    t = np.arange(cfg.series_length) / cfg.series_length  # (T,)
    banks = [_class_wavebank(cfg, c) for c in range(cfg.n_classes)]
    domains = []
    for i in range(cfg.n_domains):
        shift = cfg.shifts[i]
        rng = derive_rng(cfg.seed, "synth_domain", i)
        baseline = shift.baseline_offset * _domain_baseline_pattern(cfg, i)
        windows = np.empty((cfg.samples_per_domain, cfg.series_length, cfg.n_features))
        labels = np.empty(cfg.samples_per_domain, dtype=np.intp)
        for s in range(cfg.samples_per_domain):
            label = s % cfg.n_classes
            freqs, amps, phases, slopes = banks[label]
            phase_noise = cfg.phase_jitter * rng.standard_normal(freqs.shape)
            amp_noise = 1.0 + cfg.amp_jitter * rng.standard_normal(freqs.shape)
            f_eff = freqs + shift.frequency_offset
            # (T, F): sum the wave bank per feature, then the envelope
            waves = np.sum(
                (amps * amp_noise)[None, :, :]
                * np.sin(2.0 * np.pi * f_eff[None, :, :] * t[:, None, None]
                         + (phases + phase_noise)[None, :, :]),
                axis=2,
            )
            x = waves + slopes[None, :] * t[:, None]
            x = shift.amplitude_scale * x + baseline
            x = x + shift.corr_noise * rng.standard_normal(cfg.series_length)[:, None]
            x = x + cfg.sample_noise * rng.standard_normal(x.shape)
            windows[s] = x
            labels[s] = label
        domains.append(DomainData(domain_id=chr(ord("A") + i), windows=windows, labels=labels))
    meta = {"source": "synthetic", "seed": cfg.seed,
            "shifts": [s.to_dict() for s in cfg.shifts]}
    return DomainDataset(domains=tuple(domains), n_classes=cfg.n_classes, meta=meta)


def window_series(series, win, step):
    """Slices starting at 0, step, 2*step, ...; count floor((L-win)/step)+1."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    L = series.shape[0]
    if win < 1 or step < 1:
        raise InputError("window and step must be positive")
    if L < win:
        raise InputError(f"series length {L} shorter than window {win}")
    count = (L - win) // step + 1
    return [series[k * step : k * step + win] for k in range(count)]


def standardize_domain(windows):
    """Per-feature standardization with statistics from this domain only."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise InputError("expected a nonempty (n, T, F) window stack")
    mu = windows.mean(axis=(0, 1))
    sigma = windows.std(axis=(0, 1))
    return (windows - mu) / np.maximum(sigma, SIGMA_GUARD)


def standardize_dataset(dataset: DomainDataset) -> DomainDataset:
    domains = tuple(
        DomainData(d.domain_id, standardize_domain(d.windows), d.labels) for d in dataset.domains
    )
    return DomainDataset(domains=domains, n_classes=dataset.n_classes,
                         meta={**dataset.meta, "standardized": True})


def _parse_csv(path: Path, label_col, feature_cols):
    """Rows of (features, label) with file/line context on failure."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        try:
            label_idx = header.index(label_col)
            feat_idx = [header.index(c) for c in feature_cols]
        except ValueError as exc:
            raise ManifestError(f"{path}: column not found in header: {exc}") from None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                feats = [float(row[j]) for j in feat_idx]
                label = int(float(row[label_idx]))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}:{line_no}: bad row: {exc}") from None
            rows.append((feats, label))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    features = np.array([r[0] for r in rows])
    labels = np.array([r[1] for r in rows], dtype=np.intp)
    return features, labels


def _window_label(labels):
    """Majority label in the window, ties toward the smaller class index."""
    values, counts = np.unique(labels, return_counts=True)
    return int(values[np.argmax(counts)])


def load_manifest(path):
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    for key in ("window", "step", "files"):
        if key not in manifest:
            raise ManifestError(f"manifest {path}: missing key {key!r}")
    for entry in manifest["files"]:
        for key in ("path", "domain", "label_col", "feature_cols"):
            if key not in entry:
                raise ManifestError(f"manifest {path}: file entry missing {key!r}")
    return manifest


def load_csv_dataset(directory, manifest_path) -> DomainDataset:
    """Ingest numeric CSVs per the manifest: window, then standardize
    (unless the manifest disables it), grouped by declared domain."""
    directory = Path(directory)
    manifest = load_manifest(manifest_path)
    win, step = int(manifest["window"]), int(manifest["step"])
    standardize = bool(manifest.get("standardize", True))

    by_domain = {}
    for entry in manifest["files"]:
        features, labels = _parse_csv(directory / entry["path"], entry["label_col"],
                                      entry["feature_cols"])
        windows = window_series(features, win, step)
        window_labels = [
            _window_label(labels[k * step : k * step + win]) for k in range(len(windows))
        ]
        bucket = by_domain.setdefault(str(entry["domain"]), ([], []))
        bucket[0].extend(windows)
        bucket[1].extend(window_labels)

    domains = []
    for domain_id in by_domain:  # manifest order is preserved
        wins, labs = by_domain[domain_id]
        stack = np.stack(wins)
        if standardize:
            stack = standardize_domain(stack)
        domains.append(DomainData(domain_id=domain_id, windows=stack, labels=np.array(labs)))
    if "n_classes" in manifest:
        n_classes = int(manifest["n_classes"])
    else:
        n_classes = int(max(d.labels.max() for d in domains)) + 1
    meta = {"source": "csv", "manifest": str(manifest_path)}
    return DomainDataset(domains=tuple(domains), n_classes=n_classes, meta=meta)


def export_csv_dataset(dataset: DomainDataset, directory):
    """Write one CSV per domain (windows concatenated row-wise) plus a
    manifest that reloads them into identical windows."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    T, F = dataset.window_shape
    feature_cols = [f"f{j}" for j in range(F)]
    entries = []
    for d in dataset.domains:
        fname = f"domain_{d.domain_id}.csv"
        with open(directory / fname, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", *feature_cols])
            for window, label in zip(d.windows, d.labels):
                for row in window:
                    writer.writerow([int(label), *[repr(float(v)) for v in row]])
        entries.append({
            "path": fname,
            "domain": d.domain_id,
            "label_col": "label",
            "feature_cols": feature_cols,
        })
    manifest = {
        "window": T,
        "step": T,
        "standardize": False,
        "n_classes": dataset.n_classes,
        "files": entries,
    }
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path
