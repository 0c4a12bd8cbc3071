"""Large-scale and small-scale channel generation.

Large-scale: 3GPP TR 38.901 UMi street-canyon path loss (Table 7.4.1-1)
with the standard UMi LOS probability (Table 7.4.2-1). Small-scale: Rician
fading with a geometry-derived specular component (half-wavelength ULA at
the BS) and i.i.d. circularly-symmetric Gaussian diffuse part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import (
    STREAM_CSI_ERROR,
    STREAM_FADING,
    STREAM_LOS,
    STREAM_SHADOWING,
    ScenarioConfig,
    Topology,
    drop_rng,
)

SPEED_OF_LIGHT = 299_792_458.0
# TR 38.901 breakpoint-distance note fixes c = 3.0e8 m/s
_C_BREAKPOINT = 3.0e8
_H_ENV = 1.0  # effective environment height [m] for the breakpoint distance


def umi_pathloss(d2d, fc: float, h_bs: float = 10.0, h_ue: float = 1.5, los: bool = True):
    """UMi street-canyon path loss [dB] at 2D distance ``d2d`` [m], carrier ``fc`` [GHz].

    LOS is the dual-slope TR 38.901 formula around the breakpoint distance
    4*(h_bs-1)*(h_ue-1)*fc_Hz/c; NLOS is max(PL_LOS, PL'_NLOS). Accepts
    scalar or array ``d2d``.
    """
    d2d = np.asarray(d2d, dtype=float)
    if np.any(d2d < 10.0 - 1e-9):
        raise ValueError("d2d below the 10 m validity limit")
    if not (0.5 <= fc <= 100.0):
        raise ValueError("fc outside the 0.5-100 GHz validity range")
    dz = h_bs - h_ue
    d3d = np.hypot(d2d, dz)
    d_bp = 4.0 * (h_bs - _H_ENV) * (h_ue - _H_ENV) * (fc * 1e9) / _C_BREAKPOINT
    pl1 = 32.4 + 21.0 * np.log10(d3d) + 20.0 * np.log10(fc)
    pl2 = 32.4 + 40.0 * np.log10(d3d) + 20.0 * np.log10(fc) \
        - 9.5 * np.log10(d_bp**2 + dz**2)
    pl_los = np.where(d2d <= d_bp, pl1, pl2)
    if los:
        out = pl_los
    else:
        pl_nlos = 35.3 * np.log10(d3d) + 22.4 + 21.3 * np.log10(fc) - 0.3 * (h_ue - 1.5)
        out = np.maximum(pl_los, pl_nlos)
    return float(out) if out.ndim == 0 else out


def los_probability(d2d):
    """TR 38.901 UMi LOS probability: 1 within 18 m, decaying beyond."""
    d2d = np.asarray(d2d, dtype=float)
    if np.any(d2d < 0):
        raise ValueError("d2d must be >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        p = 18.0 / d2d + np.exp(-d2d / 36.0) * (1.0 - 18.0 / d2d)
    p = np.where(d2d <= 18.0, 1.0, p)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def noise_power(bandwidth: float, noise_figure: float) -> float:
    """Thermal noise power [W]: -174 dBm/Hz + 10*log10(B) + NF."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    dbm = -174.0 + 10.0 * np.log10(bandwidth) + noise_figure
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def rsrp(beta, p_max: float, nt: int):
    """Reference signal received power [dBm]: per-antenna reference power times gain."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0) or p_max <= 0 or nt < 1:
        raise ValueError("beta, p_max, and nt must be positive")
    out = 10.0 * np.log10(1000.0 * beta * p_max / nt)
    return float(out) if out.ndim == 0 else out


def draw_small_scale(beta: float, rician_k: float, nt: int, rng, specular=None):
    """One Rician channel vector with E||h||^2 = beta * nt.

    ``rician_k`` is the K-factor in dB (+/-inf supported for the pure
    specular / Rayleigh limits). ``specular`` is the unit-modulus
    deterministic component; defaults to all-ones when no geometry is given.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if specular is None:
        a = np.ones(nt, dtype=complex)
    else:
        a = np.asarray(specular, dtype=complex)
        if a.shape != (nt,):
            raise ValueError("specular component must have length nt")
    g = (rng.standard_normal(nt) + 1j * rng.standard_normal(nt)) / np.sqrt(2.0)
    if np.isposinf(rician_k):
        mix = a
    elif np.isneginf(rician_k):
        mix = g
    else:
        kappa = 10.0 ** (rician_k / 10.0)
        mix = np.sqrt(kappa / (1.0 + kappa)) * a + np.sqrt(1.0 / (1.0 + kappa)) * g
    return np.sqrt(beta) * mix


@dataclass(frozen=True)
class ChannelState:
    """Per-drop channel realization for every (BS, UE) pair."""

    h: np.ndarray            # (n_bs, n_ue, nt) complex, large-scale gain included
    beta: np.ndarray         # (n_bs, n_ue) linear power gain
    rsrp_dbm: np.ndarray     # (n_bs, n_ue)
    noise_power: float       # [W]
    los: np.ndarray          # (n_bs, n_ue) bool

    def __post_init__(self):
        for arr in (self.h, self.beta, self.rsrp_dbm, self.los):
            arr.setflags(write=False)


def _specular_phases(cfg: ScenarioConfig, topo: Topology) -> np.ndarray:
    """Unit-modulus specular component per (bs, ue, antenna) from exact distances.

    Antennas form a ULA along x with half-wavelength spacing, centered on
    the BS position.
    """
    lam = SPEED_OF_LIGHT / (cfg.carrier_freq * 1e9)
    offsets = (np.arange(cfg.nt) - (cfg.nt - 1) / 2.0) * (lam / 2.0)
    ant = topo.bs_positions[:, None, :].repeat(cfg.nt, axis=1).astype(float)
    ant[:, :, 0] += offsets[None, :]
    diff = topo.ue_positions[None, :, None, :] - ant[:, None, :, :]
    dist = np.linalg.norm(diff, axis=-1)  # (n_bs, n_ue, nt)
    return np.exp(-2j * np.pi * dist / lam)


def build_channel(cfg: ScenarioConfig, topo: Topology, drop_index: int) -> ChannelState:
    """Draw one drop's full channel state (pure function of (cfg, drop_index)).

    LOS/NLOS is drawn once per (BS, UE) pair from the UMi LOS probability;
    LOS links use cfg.rician_k, NLOS links cfg.rician_k_nlos. With
    ``normalize_gains`` the large-scale gains are scaled so their median is
    1, which makes the transmit-SNR sweep geometry-independent.
    """
    d2d = np.linalg.norm(
        topo.ue_positions[None, :, :2] - topo.bs_positions[:, None, :2], axis=2
    )
    los_rng = drop_rng(cfg.seed, drop_index, STREAM_LOS)
    los = los_rng.uniform(size=d2d.shape) < los_probability(d2d)

    pl = np.where(
        los,
        umi_pathloss(d2d, cfg.carrier_freq, cfg.bs_height, cfg.ue_height, los=True),
        umi_pathloss(d2d, cfg.carrier_freq, cfg.bs_height, cfg.ue_height, los=False),
    )
    if cfg.shadowing_std > 0:
        sh_rng = drop_rng(cfg.seed, drop_index, STREAM_SHADOWING)
        pl = pl + cfg.shadowing_std * sh_rng.standard_normal(pl.shape)
    beta = 10.0 ** (-pl / 10.0)
    if cfg.normalize_gains:
        beta = beta / np.median(beta)

    a = _specular_phases(cfg, topo)
    fade_rng = drop_rng(cfg.seed, drop_index, STREAM_FADING)
    g = (fade_rng.standard_normal(a.shape) + 1j * fade_rng.standard_normal(a.shape)) / np.sqrt(2.0)
    kappa = 10.0 ** (np.where(los, cfg.rician_k, cfg.rician_k_nlos) / 10.0)[..., None]
    h = np.sqrt(beta)[..., None] * (
        np.sqrt(kappa / (1.0 + kappa)) * a + np.sqrt(1.0 / (1.0 + kappa)) * g
    )
    return ChannelState(
        h=h,
        beta=beta,
        rsrp_dbm=rsrp(beta, cfg.p_max_per_bs, cfg.nt),
        noise_power=noise_power(cfg.bandwidth, cfg.noise_figure),
        los=los,
    )


def perturb_csi(channel: ChannelState, cfg: ScenarioConfig, drop_index: int) -> ChannelState:
    """Channel copy with additive CSI error of std csi_error_std*sqrt(beta) per antenna."""
    if cfg.csi_error_std == 0:
        return channel
    rng = drop_rng(cfg.seed, drop_index, STREAM_CSI_ERROR)
    e = (rng.standard_normal(channel.h.shape) + 1j * rng.standard_normal(channel.h.shape)) / np.sqrt(2.0)
    h_hat = channel.h + cfg.csi_error_std * np.sqrt(channel.beta)[..., None] * e
    return ChannelState(
        h=h_hat,
        beta=channel.beta.copy(),
        rsrp_dbm=channel.rsrp_dbm.copy(),
        noise_power=channel.noise_power,
        los=channel.los.copy(),
    )
