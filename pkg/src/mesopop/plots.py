"""Figure rendering for the CLI report paths (PNG alongside each CSV)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_trace_figure(path, traces, labels, t_range=None, mass_panel=True,
                      title=None):
    """Activity (and mass) curves for one or more traces."""
    nrows = 2 if mass_panel else 1
    fig, axes = plt.subplots(nrows, 1, figsize=(8, 2.6 * nrows), sharex=True,
                             squeeze=False)
    ax = axes[0, 0]
    for tr, lab in zip(traces, labels):
        t = tr.times
        sel = slice(None)
        if t_range is not None:
            sel = (t >= t_range[0]) & (t <= t_range[1])
        ax.plot(t[sel], tr.A[sel], lw=0.7, label=lab)
    ax.set_ylabel("A (Hz)")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    if mass_panel:
        axm = axes[1, 0]
        for tr, lab in zip(traces, labels):
            t = tr.times
            sel = slice(None)
            if t_range is not None:
                sel = (t >= t_range[0]) & (t <= t_range[1])
            axm.plot(t[sel], tr.mass[sel], lw=0.7, label=lab)
        axm.axhline(1.0, color="k", lw=0.5, ls=":")
        axm.set_ylabel("mass")
        axm.set_xlabel("t (s)")
    else:
        ax.set_xlabel("t (s)")
    _save(fig, path)


def save_expected_rate_figure(path, traces, labels, t_range=None, title=None,
                              extra=None):
    """Expected-rate curves (Abar); `extra` adds (t, y, label) line triples."""
    fig, ax = plt.subplots(figsize=(8, 2.8))
    for tr, lab in zip(traces, labels):
        t = tr.times
        sel = slice(None)
        if t_range is not None:
            sel = (t >= t_range[0]) & (t <= t_range[1])
        ax.plot(t[sel], tr.Abar[sel], lw=0.8, label=lab)
    if extra:
        for t, y, lab in extra:
            sel = slice(None)
            if t_range is not None:
                sel = (t >= t_range[0]) & (t <= t_range[1])
            ax.plot(t[sel], y[sel], lw=1.2, label=lab)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("expected rate (Hz)")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def save_mass_figure(path, curves, labels, t_range=None, title=None):
    """Mass curves from (t, mass) pairs."""
    fig, ax = plt.subplots(figsize=(8, 2.8))
    for (t, m), lab in zip(curves, labels):
        sel = slice(None)
        if t_range is not None:
            sel = (t >= t_range[0]) & (t <= t_range[1])
        ax.plot(t[sel], m[sel], lw=0.8, label=lab)
    ax.axhline(1.0, color="k", lw=0.5, ls=":")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("mass")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def save_spectrum_figure(path, spectra, labels, title=None):
    """Log-log power spectra; the DC bin is dropped from the plot."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for sp, lab in zip(spectra, labels):
        sel = sp.freqs > 0
        ax.loglog(sp.freqs[sel], sp.power[sel], lw=1.0, label=lab)
    ax.set_xlabel("f (Hz)")
    ax.set_ylabel("power (Hz)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def save_raster_figure(path, raster, N, t_range=None, title=None):
    fig, ax = plt.subplots(figsize=(8, 2.8))
    t, ids = raster[:, 0], raster[:, 1]
    if t_range is not None:
        sel = (t >= t_range[0]) & (t <= t_range[1])
        t, ids = t[sel], ids[sel]
    ax.plot(t, ids, ".", ms=1.0, color="k")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("neuron")
    ax.set_ylim(-1, N)
    if title:
        ax.set_title(title)
    _save(fig, path)


def save_pdmp_figure(path, result, title=None):
    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    axes[0].plot(result.sample_t, result.sample_rate, lw=0.8)
    axes[0].set_ylabel("expected rate (Hz)")
    axes[1].plot(result.sample_t, result.sample_mass, lw=0.8)
    axes[1].axhline(1.0, color="k", lw=0.5, ls=":")
    axes[1].set_ylabel("mass")
    axes[1].set_xlabel("t (s)")
    if title:
        axes[0].set_title(title)
    _save(fig, path)


def save_couple_figure(path, run, title=None):
    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    gap = np.maximum(run.sample_gap, 1e-16)
    axes[0].semilogy(run.sample_t, gap, lw=0.8)
    for t_async in run.async_jump_times:
        axes[0].axvline(t_async, color="r", lw=0.4, alpha=0.5)
    axes[0].set_ylabel("|rate gap| (Hz)")
    axes[1].plot(run.sample_t, run.sample_mass_left, lw=0.8, label="left")
    axes[1].plot(run.sample_t, run.sample_mass_right, lw=0.8, label="right")
    axes[1].set_ylabel("mass")
    axes[1].set_xlabel("t (s)")
    axes[1].legend(fontsize=8)
    if title:
        axes[0].set_title(title)
    _save(fig, path)
