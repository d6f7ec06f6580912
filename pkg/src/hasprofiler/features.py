"""Sliding-window features and per-sampling-period sample extraction.

Five features per window — downlink rate, downlink load, number of large
uplink packets and the mean/std of their sizes — computed over L windows in
parallel for a vector of M = 5L values per sampling instant.

Window intervals are half-open [t_w - T_w, t_w): a packet at exactly t_w
belongs to the next instant. Early windows that extend before the trace
start keep the full T_w denominator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .packets import FlowState, build_flows

DEFAULT_WINDOWS_S = (1.0, 5.0, 10.0, 20.0)
FEATURE_BASE_NAMES = ("DLrate", "DLload", "ULnPckts", "ULavgSize", "ULstdSize")

FLOW_CLASSES = ("NonHAS", "HAS")
BUFFER_CLASSES = ("Filling", "Steady", "Depleting", "Unclear")


@dataclass(frozen=True)
class WindowConfig:
    """Sampling cadence, window set and the two packet-level thresholds."""

    sampling_period_s: float = 1.0
    window_durations_s: tuple[float, ...] = DEFAULT_WINDOWS_S
    iat_threshold_s: float = 0.1
    ul_size_threshold_bytes: int = 100

    def __post_init__(self):
        ts = self.sampling_period_s
        if ts <= 0:
            raise ValueError("sampling period must be positive")
        if not self.window_durations_s:
            raise ValueError("at least one window duration required")
        prev = 0.0
        for tw in self.window_durations_s:
            if tw <= prev:
                raise ValueError("window durations must be strictly increasing")
            n = tw / ts
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"window {tw} is not a multiple of T_s={ts}")
            prev = tw
        if not self.iat_threshold_s < ts:
            raise ValueError("IAT threshold must be below the sampling period")

    @property
    def n_windows(self) -> int:
        return len(self.window_durations_s)

    @property
    def n_features(self) -> int:
        return 5 * self.n_windows

    def feature_names(self) -> list[str]:
        names = []
        for tw in self.window_durations_s:
            suffix = f"{int(tw)}s" if float(tw).is_integer() else f"{tw}s"
            names += [f"{base}_{suffix}" for base in FEATURE_BASE_NAMES]
        return names


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    t_w: float


def _window_slice(times: np.ndarray, t_w: float, T_w: float) -> slice:
    lo = np.searchsorted(times, t_w - T_w, side="left")
    hi = np.searchsorted(times, t_w, side="left")
    return slice(lo, hi)


def dl_rate(flow: FlowState, t_w: float, T_w: float) -> float:
    """Downlink rate in bit/s over [t_w - T_w, t_w)."""
    times, is_dl, sizes, _ = flow.arrays()
    win = _window_slice(times, t_w, T_w)
    return 8.0 * float(sizes[win][is_dl[win]].sum()) / T_w


def dl_load(flow: FlowState, t_w: float, T_w: float, h_t: float) -> float:
    """Fraction of the window spent in continuous downlink transmission.

    Each downlink packet in the window contributes its IAT to the previous
    downlink packet of the flow (which may lie before the window edge), but
    only when that IAT is at most h_t. The first downlink packet of a flow
    contributes nothing.
    """
    times, is_dl, _, dl_iat = flow.arrays()
    win = _window_slice(times, t_w, T_w)
    iats = dl_iat[win][is_dl[win]]
    iats = iats[~np.isnan(iats)]  # first downlink packet has no IAT
    return float(iats[iats <= h_t].sum()) / T_w


def _qualifying_ul_sizes(flow: FlowState, t_w: float, T_w: float,
                         h_s: int) -> np.ndarray:
    times, is_dl, sizes, _ = flow.arrays()
    win = _window_slice(times, t_w, T_w)
    ul_sizes = sizes[win][~is_dl[win]]
    return ul_sizes[ul_sizes > h_s]


def ul_n_pckts(flow: FlowState, t_w: float, T_w: float, h_s: int) -> int:
    """Number of uplink packets larger than h_s bytes (strict) in the window."""
    return int(_qualifying_ul_sizes(flow, t_w, T_w, h_s).size)


def ul_size_stats(flow: FlowState, t_w: float, T_w: float,
                  h_s: int) -> tuple[float, float]:
    """Mean and population std of the qualifying uplink sizes; (0, 0) if none."""
    sizes = _qualifying_ul_sizes(flow, t_w, T_w, h_s)
    if sizes.size == 0:
        return 0.0, 0.0
    return float(sizes.mean()), float(sizes.std())


def feature_vector(flow: FlowState, t_w: float, cfg: WindowConfig) -> FeatureVector:
    """The M = 5L values for one sampling instant, windows in ascending order."""
    values: list[float] = []
    for T_w in cfg.window_durations_s:
        avg, std = ul_size_stats(flow, t_w, T_w, cfg.ul_size_threshold_bytes)
        values += [dl_rate(flow, t_w, T_w),
                   dl_load(flow, t_w, T_w, cfg.iat_threshold_s),
                   float(ul_n_pckts(flow, t_w, T_w, cfg.ul_size_threshold_bytes)),
                   avg, std]
    return FeatureVector(tuple(values), t_w)


@dataclass
class Dataset:
    """Feature matrix with integer class codes, one row per non-empty sample."""

    features: np.ndarray               # (N, M) float64
    labels: np.ndarray                 # (N,) int64 codes into class_names
    feature_names: list[str]
    class_names: list[str]
    scenario_tags: list[str] | None = None   # optional per-row metadata

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("feature/label row count mismatch")
        if self.features.shape[1] != len(self.feature_names):
            raise ValueError("feature name count mismatch")
        if np.isnan(self.features).any():
            raise ValueError("dataset contains NaN feature values")
        if self.labels.size and not (
                (self.labels >= 0) & (self.labels < len(self.class_names))).all():
            raise ValueError("label code outside class_names")
        if self.scenario_tags is not None and \
                len(self.scenario_tags) != self.features.shape[0]:
            raise ValueError("scenario tag count mismatch")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        tags = None
        if self.scenario_tags is not None:
            tags = [self.scenario_tags[i] for i in indices]
        return Dataset(self.features[indices], self.labels[indices],
                       list(self.feature_names), list(self.class_names), tags)


def concat_datasets(parts: list[Dataset]) -> Dataset:
    if not parts:
        raise ValueError("no datasets to concatenate")
    first = parts[0]
    for ds in parts[1:]:
        if ds.feature_names != first.feature_names or \
                ds.class_names != first.class_names:
            raise ValueError("datasets have incompatible schemas")
    has_tags = any(ds.scenario_tags is not None for ds in parts)
    tags = None
    if has_tags:
        tags = []
        for ds in parts:
            tags += ds.scenario_tags if ds.scenario_tags is not None \
                else [""] * ds.n_samples
    return Dataset(np.vstack([ds.features for ds in parts]),
                   np.concatenate([ds.labels for ds in parts]),
                   list(first.feature_names), list(first.class_names), tags)


def _class_family(label_names: set[str]) -> list[str]:
    if label_names <= set(FLOW_CLASSES):
        return list(FLOW_CLASSES)
    if label_names <= set(BUFFER_CLASSES):
        return list(BUFFER_CLASSES)
    raise ValueError(f"labels mix families or are unknown: {sorted(label_names)}")


def extract_samples(packets, client_ip: str, labels, cfg: WindowConfig,
                    scenario: str | None = None) -> Dataset:
    """Build dataset rows for every labeled, non-empty sampling instant.

    A row is emitted for flow f at t_w = T_s, 2T_s, ... iff at least one
    packet of f (either direction) arrived in [t_w - T_s, t_w) and a label
    interval of f covers the midpoint t_w - T_s/2. ``labels`` must all
    belong to one label family (flow type or buffer state).
    """
    class_names = _class_family({iv.label for iv in labels}) if labels \
        else list(FLOW_CLASSES)
    by_flow: dict[str, list] = {}
    for iv in labels:
        by_flow.setdefault(iv.flow_id, []).append(iv)

    flows = build_flows(packets, client_ip)
    ts = cfg.sampling_period_s
    rows, codes = [], []
    for key in sorted(flows, key=lambda k: k.to_string()):
        flow = flows[key]
        intervals = by_flow.get(key.to_string(), [])
        if not intervals:
            continue
        times = flow.arrays()[0]
        n_instants = math.ceil(times[-1] / ts - 1e-9)
        for i in range(1, n_instants + 1):
            t_w = i * ts
            lo = np.searchsorted(times, t_w - ts, side="left")
            hi = np.searchsorted(times, t_w, side="left")
            if hi == lo:
                continue  # empty sample, dropped
            mid = t_w - ts / 2
            label = next((iv.label for iv in intervals
                          if iv.start <= mid < iv.end), None)
            if label is None:
                continue
            rows.append(feature_vector(flow, t_w, cfg).values)
            codes.append(class_names.index(label))

    features = np.asarray(rows, dtype=np.float64) if rows \
        else np.empty((0, cfg.n_features))
    tags = [scenario] * len(rows) if scenario is not None else None
    return Dataset(features, np.asarray(codes, dtype=np.int64),
                   cfg.feature_names(), class_names, tags)
