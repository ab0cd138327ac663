"""Synthetic Wiener-Hammerstein data generation and benchmark-file loading.

The generated system is a static nonlinearity sandwiched between two
stable discrete-time filters, driven by bandlimited Gaussian noise:

    u --(front filter)--> v --(static curve)--> s --(back filter)--> y (+noise)

All blocks start at rest, so the emitted records are exactly consistent
with zero initial state.  Everything is deterministic given the seed;
the noise stream is independent of the input stream, so changing
noise_std never changes the input realization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import ConfigError, DataError, UnstableModelError
from .lti import LtiModel
from .records import IoRecord, load_record_csv

log = logging.getLogger(__name__)

# imitates a 4.4 kHz / 5.0 kHz pair of 3rd-order low-pass blocks at
# fs = 51.2 kHz (cutoffs in Nyquist units: 4.4/25.6 and 5.0/25.6)
_DEFAULT_FRONT = tuple(
    arr.tolist() for arr in scipy.signal.butter(3, 4.4 / 25.6))
_DEFAULT_BACK = tuple(
    arr.tolist() for arr in scipy.signal.butter(3, 5.0 / 25.6))

_INPUT_FIR_TAPS = 257


@dataclass
class WhConfig:
    lti_front: tuple = _DEFAULT_FRONT          # (numerator, denominator)
    lti_back: tuple = _DEFAULT_BACK
    nonlinearity: str = "diode_soft"           # identity|diode_soft|tanh|abs
    nl_params: dict = field(
        default_factory=lambda: {"knee": 1.5, "sharpness": 3.0})
    input_bandwidth_fraction: float = 10.0 / 25.6
    N_est: int = 2500
    N_val: int = 10000
    noise_std: float = 1e-3
    seed: int = 0
    input_std: float = 1.0
    sample_period: float = 1.0 / 51200.0

    def __post_init__(self):
        if self.N_est < 64 or self.N_val < 64:
            raise ConfigError(
                f"sample counts must be >= 64, got N_est={self.N_est}, "
                f"N_val={self.N_val}")
        if not 0.0 < self.input_bandwidth_fraction <= 1.0:
            raise ConfigError(
                "input_bandwidth_fraction must be in (0, 1], got "
                f"{self.input_bandwidth_fraction}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        for name, (num, den) in (("front", self.lti_front),
                                 ("back", self.lti_back)):
            poles = np.roots(np.asarray(den, dtype=float))
            if poles.size and np.max(np.abs(poles)) >= 1.0:
                raise UnstableModelError(
                    f"{name} filter is unstable (pole magnitude "
                    f"{np.max(np.abs(poles)):.4f})")
        if self.nonlinearity not in ("identity", "diode_soft", "tanh", "abs"):
            raise ConfigError(
                f"unknown nonlinearity '{self.nonlinearity}'")

    def to_dict(self) -> dict:
        return {"lti_front": [list(v) for v in self.lti_front],
                "lti_back": [list(v) for v in self.lti_back],
                "nonlinearity": self.nonlinearity,
                "nl_params": dict(self.nl_params),
                "input_bandwidth_fraction": self.input_bandwidth_fraction,
                "N_est": self.N_est, "N_val": self.N_val,
                "noise_std": self.noise_std, "seed": self.seed,
                "input_std": self.input_std,
                "sample_period": self.sample_period}

    @classmethod
    def from_dict(cls, d: dict) -> "WhConfig":
        kwargs = dict(d)
        if "lti_front" in kwargs:
            kwargs["lti_front"] = tuple(kwargs["lti_front"])
        if "lti_back" in kwargs:
            kwargs["lti_back"] = tuple(kwargs["lti_back"])
        return cls(**kwargs)


def static_curve(name: str, params: dict):
    """The scalar nonlinearity as a vectorized callable with value 0 at 0."""
    if name == "identity":
        return lambda v: v
    if name == "diode_soft":
        knee = float(params.get("knee", 1.0))
        sharp = float(params.get("sharpness", 2.0))
        ln2 = np.log(2.0)

        def curve(v):
            return v + knee * (np.logaddexp(0.0, sharp * v) - ln2) / sharp
        return curve
    if name == "tanh":
        gain = float(params.get("gain", 1.0))
        return lambda v: np.tanh(gain * v)
    if name == "abs":
        return np.abs
    raise ConfigError(f"unknown nonlinearity '{name}'")


def _tf_to_ss(num, den) -> LtiModel:
    A, B, C, D = scipy.signal.tf2ss(np.asarray(num, float),
                                    np.asarray(den, float))
    return LtiModel(A, B, C, D)


def cascade_ss(first: LtiModel, second: LtiModel) -> LtiModel:
    """State-space model of `second` applied after `first` (SISO chains)."""
    n1, n2 = first.n_x, second.n_x
    A = np.block([[first.A, np.zeros((n1, n2))],
                  [second.B @ first.C, second.A]])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return LtiModel(A, B, C, D)


def _synthesize(cfg: WhConfig, n: int, rng_input, rng_noise, role: str,
                curve) -> IoRecord:
    white = rng_input.standard_normal(n) * cfg.input_std
    if cfg.input_bandwidth_fraction < 1.0:
        fir = scipy.signal.firwin(_INPUT_FIR_TAPS,
                                  cfg.input_bandwidth_fraction)
        u = scipy.signal.lfilter(fir, 1.0, white)
    else:
        u = white
    bf, af = (np.asarray(v, float) for v in cfg.lti_front)
    bb, ab = (np.asarray(v, float) for v in cfg.lti_back)
    v = scipy.signal.lfilter(bf, af, u)
    s = curve(v)
    y = scipy.signal.lfilter(bb, ab, s)
    if cfg.noise_std > 0:
        y = y + rng_noise.standard_normal(n) * cfg.noise_std
    return IoRecord(u=u, y=y, sample_period=cfg.sample_period, role=role)


def generate_wh(cfg: WhConfig):
    """Generate (estimation record, validation record, truth_meta).

    truth_meta carries the exact blocks (transfer functions, their
    state-space forms, the cascade of the two linear blocks, and the
    static curve spec) for oracle checks.
    """
    curve = static_curve(cfg.nonlinearity, cfg.nl_params)
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    est = _synthesize(cfg, cfg.N_est, np.random.default_rng(seeds[0]),
                      np.random.default_rng(seeds[2]), "estimation", curve)
    val = _synthesize(cfg, cfg.N_val, np.random.default_rng(seeds[1]),
                      np.random.default_rng(seeds[3]), "validation", curve)
    front_ss = _tf_to_ss(*cfg.lti_front)
    back_ss = _tf_to_ss(*cfg.lti_back)
    truth_meta = {
        "front": cfg.lti_front,
        "back": cfg.lti_back,
        "front_ss": front_ss,
        "back_ss": back_ss,
        "cascade_ss": cascade_ss(front_ss, back_ss),
        "nonlinearity": cfg.nonlinearity,
        "nl_params": dict(cfg.nl_params),
        "noise_std": cfg.noise_std,
        "input_bandwidth_fraction": cfg.input_bandwidth_fraction,
    }
    return est, val, truth_meta


def load_benchmark(path, n_est: int, n_val: int, *, est_offset: int = 0,
                   val_offset=None, remove_dc: bool = False):
    """Slice (estimation, validation) records out of a benchmark CSV.

    Slices must not overlap.  With ``remove_dc`` the per-channel means of
    the *estimation* slice are subtracted from both slices; the removed
    amounts are logged.
    """
    full = load_record_csv(path)
    if val_offset is None:
        val_offset = est_offset + n_est
    n = full.n_samples
    for name, off, cnt in (("estimation", est_offset, n_est),
                           ("validation", val_offset, n_val)):
        if off < 0 or cnt < 2 or off + cnt > n:
            raise DataError(
                f"{name} slice [{off}, {off + cnt}) out of range for "
                f"{n}-sample file")
    lo1, hi1 = est_offset, est_offset + n_est
    lo2, hi2 = val_offset, val_offset + n_val
    if max(lo1, lo2) < min(hi1, hi2):
        raise DataError(
            f"estimation slice [{lo1}, {hi1}) overlaps validation slice "
            f"[{lo2}, {hi2})")

    u, y = full.u, full.y
    du = np.zeros(full.n_u)
    dy = np.zeros(full.n_y)
    if remove_dc:
        du = u[lo1:hi1].mean(axis=0)
        dy = y[lo1:hi1].mean(axis=0)
        log.info("removed DC offsets: input %s, output %s",
                 du.tolist(), dy.tolist())
        u = u - du
        y = y - dy
    est = IoRecord(u=u[lo1:hi1], y=y[lo1:hi1],
                   sample_period=full.sample_period, role="estimation")
    val = IoRecord(u=u[lo2:hi2], y=y[lo2:hi2],
                   sample_period=full.sample_period, role="validation")
    return est, val
