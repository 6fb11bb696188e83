"""Stage implementations behind the CLI verbs.

Each stage reads only artifacts recorded in the manifest by an earlier
stage, writes its own files into the run directory, and reports them for
checksumming.  Stage order: spectrum -> localize -> extract -> vacuum ->
(lightcone | propagator | scatter) -> detect.
"""

from __future__ import annotations

import csv
import json
import os
import time

import numpy as np

from .config import STAGES, RunConfig
from .creation import CreationOperator, dressed_creation_operator
from .detection import (
    build_detector,
    calibrate_coefficients,
    detection_observable,
    epsilon_functional,
    resonance_lower_bound,
)
from .dmrg import dmrg_ground_state
from .evolve import EvolutionConfig
from .manifest import (
    file_checksum,
    open_manifest,
    require_inputs,
    write_manifest,
)
from .models import build_hamiltonian
from .mpo import MatrixProductOperator
from .mps import load_state, save_state, savez_deterministic
from .scattering import (
    WavePacketSpec,
    entropy_observable,
    excess_observable,
    prepare_scattering_state,
    propagator,
    ridge_frequencies,
    run_scattering,
    spectral_density,
    wannier_quench_lightcone,
)
from .spectroscopy import BlochBand, classify_bands, extract_bands
from .wannier import kspace_local_matrix, minimize_spread

STAGE_INPUTS = {
    "spectrum": [],
    "localize": ["spectrum.npz"],
    "extract": ["spectrum.npz", "wannier.npz"],
    "vacuum": [],
    "lightcone": ["creation.npz", "vacuum_state.npz"],
    "propagator": ["creation.npz", "vacuum_state.npz", "spectrum.npz"],
    "scatter": ["creation.npz", "vacuum_state.npz"],
    "detect": ["spectrum.npz", "scatter_init.npz", "vacuum_state.npz"],
}

PRODUCERS = {
    "spectrum.npz": "spectrum",
    "wannier.npz": "localize",
    "creation.npz": "extract",
    "vacuum_state.npz": "vacuum",
    "scatter_init.npz": "scatter",
}


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _series_csv(path: str, times, values, prefix: str, indices=None):
    """One row per time, one column per site-like index."""
    values = np.asarray(values)
    if indices is None:
        indices = range(values.shape[1])
    header = ["t"] + [f"{prefix}{i}" for i in indices]
    rows = [[t] + list(row) for t, row in zip(times, values)]
    write_csv(path, header, rows)


def safe_label(label: str) -> str:
    return label.replace("+", "p").replace("-", "m")


# ---------------------------------------------------------------- artifacts


def save_spectrum(path, config: RunConfig, result, bands: dict):
    payload = {
        "length": np.array(result.length),
        "vacuum_energy": np.array(result.vacuum_energy),
        "vacuum_state": result.vacuum_state,
        "labels": np.array(sorted(bands)),
    }
    for label, band in bands.items():
        for name in (
            "sectors",
            "momenta",
            "energies",
            "absolute_energies",
            "states",
        ):
            payload[f"{label}|{name}"] = getattr(band, name)
        payload[f"{label}|meta"] = np.array(
            [band.charge, band.parity, band.band_index]
        )
    savez_deterministic(path, **payload)


def load_spectrum(path):
    with np.load(path) as data:
        length = int(data["length"])
        vacuum_energy = float(data["vacuum_energy"])
        vacuum_state = data["vacuum_state"]
        bands = {}
        for label in data["labels"]:
            label = str(label)
            charge, parity, band_index = (int(v) for v in data[f"{label}|meta"])
            bands[label] = BlochBand(
                length=length,
                sectors=data[f"{label}|sectors"],
                momenta=data[f"{label}|momenta"],
                energies=data[f"{label}|energies"],
                absolute_energies=data[f"{label}|absolute_energies"],
                states=data[f"{label}|states"],
                charge=charge,
                parity=parity,
                band_index=band_index,
                vacuum_energy=vacuum_energy,
            )
    return length, vacuum_energy, vacuum_state, bands


def save_creation(path, op: CreationOperator):
    savez_deterministic(
        path,
        support=np.array(op.support),
        unitary=op.unitary,
        fidelity=np.array(op.fidelity),
        singular_values=op.singular_values,
        null_dimension=np.array(op.null_dimension),
    )


def load_creation(path) -> CreationOperator:
    with np.load(path) as data:
        return CreationOperator(
            support=tuple(int(s) for s in data["support"]),
            unitary=data["unitary"],
            fidelity=float(data["fidelity"]),
            singular_values=data["singular_values"],
            null_dimension=int(data["null_dimension"]),
        )


def _evolution_config(config: RunConfig) -> EvolutionConfig:
    m = config.method
    return EvolutionConfig(
        dt=m.dt,
        t_max=m.t_max,
        max_chi=m.max_chi,
        cutoff=m.cutoff,
        krylov_tol=m.krylov_tol,
    )


def _large_chain(config: RunConfig):
    lh = build_hamiltonian(
        config.model.group,
        config.model.coupling,
        config.model.L_large,
        config.model.boundary,
    )
    return lh, MatrixProductOperator.from_local_hamiltonian(lh)


# ------------------------------------------------------------------- stages


def stage_spectrum(config: RunConfig, outdir: str):
    model, method = config.model, config.method
    lh = build_hamiltonian(model.group, model.coupling, model.l_intermediate, "PBC")
    result = extract_bands(
        lh.to_sparse(),
        model.l_intermediate,
        n_bands=method.n_bands,
        method=method.spectrum_method,
        count=method.spectrum_count,
    )
    bands = classify_bands(result)
    save_spectrum(os.path.join(outdir, "spectrum.npz"), config, result, bands)

    rows = []
    for label in sorted(bands):
        band = bands[label]
        for k, e, ae in zip(band.momenta, band.energies, band.absolute_energies):
            rows.append([label, k, e, ae])
    write_csv(
        os.path.join(outdir, "spectrum.csv"),
        ["band", "k", "excitation", "energy"],
        rows,
    )

    levels = []
    for se in result.sectors:
        for e in se.energies:
            levels.append((float(e), se.sector, se.momentum))
    levels.sort()
    level_rows = [
        [rank, sector, k, e, e - result.vacuum_energy]
        for rank, (e, sector, k) in enumerate(levels)
    ]
    write_csv(
        os.path.join(outdir, "levels.csv"),
        ["rank", "sector", "k", "energy", "excitation"],
        level_rows,
    )
    return ["spectrum.npz", "spectrum.csv", "levels.csv"]


def stage_localize(config: RunConfig, outdir: str):
    model, method = config.model, config.method
    length, vacuum_energy, _, bands = load_spectrum(
        os.path.join(outdir, "spectrum.npz")
    )
    if method.band_label not in bands:
        raise ValueError(
            f"band '{method.band_label}' not present in spectrum output "
            f"(have {sorted(bands)})"
        )
    band = bands[method.band_label]
    lh = build_hamiltonian(model.group, model.coupling, length, "PBC")
    m = kspace_local_matrix(band, lh)
    w = minimize_spread(
        band, m, vacuum_energy, restarts=method.restarts, seed=method.seed
    )
    savez_deterministic(
        os.path.join(outdir, "wannier.npz"),
        state=w.state,
        theta=w.gauge.theta,
        center=np.array(w.center),
        spread=np.array(w.spread),
        converged=np.array(w.converged),
        excess_profile=w.excess_profile,
        distribution=w.distribution,
        label=np.array(method.band_label),
    )
    write_csv(
        os.path.join(outdir, "wannier.csv"),
        ["site", "energy_excess", "weight"],
        [
            [j, e, p]
            for j, (e, p) in enumerate(zip(w.excess_profile, w.distribution))
        ],
    )
    return ["wannier.npz", "wannier.csv"]


def stage_extract(config: RunConfig, outdir: str):
    method = config.method
    length, _, vacuum_state, _ = load_spectrum(os.path.join(outdir, "spectrum.npz"))
    with np.load(os.path.join(outdir, "wannier.npz")) as data:
        mlwf = data["state"]
    op = dressed_creation_operator(mlwf, vacuum_state, length, method.window_width)
    save_creation(os.path.join(outdir, "creation.npz"), op)
    write_csv(
        os.path.join(outdir, "creation.csv"),
        ["width", "fidelity", "infidelity"],
        [[op.width, op.fidelity, op.infidelity]],
    )
    return ["creation.npz", "creation.csv"]


def stage_vacuum(config: RunConfig, outdir: str):
    model, method = config.model, config.method
    lh, h_mpo = _large_chain(config)
    ground = dmrg_ground_state(
        h_mpo, max_chi=method.max_chi, tol=method.dmrg_tol, seed=method.seed
    )
    save_state(
        os.path.join(outdir, "vacuum_state.npz"),
        ground.state,
        metadata={
            "energy": ground.energy,
            "group": model.group,
            "lambda": model.coupling,
            "length": model.L_large,
        },
    )
    write_csv(
        os.path.join(outdir, "vacuum.csv"),
        ["length", "energy", "sweeps", "converged"],
        [[model.L_large, ground.energy, len(ground.sweep_energies), ground.converged]],
    )
    return ["vacuum_state.npz", "vacuum.csv"]


def stage_lightcone(config: RunConfig, outdir: str):
    method = config.method
    op = load_creation(os.path.join(outdir, "creation.npz"))
    vacuum, _ = load_state(os.path.join(outdir, "vacuum_state.npz"))
    lh, h_mpo = _large_chain(config)
    result = wannier_quench_lightcone(
        op,
        vacuum,
        h_mpo,
        lh,
        _evolution_config(config),
        level_fraction=method.level_fraction,
    )
    write_csv(
        os.path.join(outdir, "lightcone.csv"),
        ["t", "front_left", "front_right"],
        list(zip(result.times, result.front_left, result.front_right)),
    )
    _series_csv(
        os.path.join(outdir, "lightcone_excess.csv"),
        result.times,
        result.excess,
        "e",
    )
    write_json(
        os.path.join(outdir, "lightcone.json"),
        {
            "speed": result.speed,
            "center": result.center,
            "fit_window": list(result.fit_window),
            "level_fraction": method.level_fraction,
        },
    )
    return ["lightcone.csv", "lightcone_excess.csv", "lightcone.json"]


def stage_propagator(config: RunConfig, outdir: str):
    method = config.method
    op = load_creation(os.path.join(outdir, "creation.npz"))
    vacuum, meta = load_state(os.path.join(outdir, "vacuum_state.npz"))
    _, _, _, bands = load_spectrum(os.path.join(outdir, "spectrum.npz"))
    band = bands[method.band_label]
    _, h_mpo = _large_chain(config)
    grid = propagator(
        op, vacuum, h_mpo, meta["energy"], _evolution_config(config)
    )
    density = spectral_density(grid)
    ridge = ridge_frequencies(density, band.momenta)
    savez_deterministic(
        os.path.join(outdir, "propagator.npz"),
        values=grid.values,
        times=grid.times,
        sites=grid.sites,
        center=np.array(grid.center),
    )
    savez_deterministic(
        os.path.join(outdir, "spectral.npz"),
        magnitude=density.magnitude,
        omegas=density.omegas,
        momenta=density.momenta,
        bin_omega=np.array(density.bin_omega),
        bin_k=np.array(density.bin_k),
    )
    write_csv(
        os.path.join(outdir, "ridge.csv"),
        ["k", "omega_peak", "band_energy", "bin_omega"],
        [
            [k, w, e, density.bin_omega]
            for k, w, e in zip(band.momenta, ridge, band.energies)
        ],
    )
    return ["propagator.npz", "spectral.npz", "ridge.csv"]


def stage_scatter(config: RunConfig, outdir: str):
    if not config.packets:
        raise ValueError("scatter stage needs at least one packet in the config")
    method = config.method
    op = load_creation(os.path.join(outdir, "creation.npz"))
    vacuum, _ = load_state(os.path.join(outdir, "vacuum_state.npz"))
    lh, h_mpo = _large_chain(config)
    packets = [
        (WavePacketSpec(center=p.center, momentum=p.momentum, width=p.width), op)
        for p in config.packets
    ]
    state = prepare_scattering_state(
        vacuum, packets, cutoff=method.cutoff, max_chi=method.max_chi
    )
    save_state(
        os.path.join(outdir, "scatter_init.npz"),
        state,
        metadata={"packets": [vars(p) for p in config.packets]},
    )
    record = run_scattering(
        state,
        h_mpo,
        _evolution_config(config),
        {
            "excess": excess_observable(lh, vacuum),
            "entropy": entropy_observable(),
        },
    )
    save_state(os.path.join(outdir, "scatter_final.npz"), record.final_state)
    _series_csv(
        os.path.join(outdir, "scatter_excess.csv"),
        record.times,
        record.series["excess"],
        "e",
    )
    _series_csv(
        os.path.join(outdir, "scatter_entropy.csv"),
        record.times,
        record.series["entropy"],
        "cut",
        indices=range(1, config.model.L_large),
    )
    write_csv(
        os.path.join(outdir, "scatter_energy.csv"),
        ["t", "energy"],
        list(zip(record.times, record.energies)),
    )
    write_json(
        os.path.join(outdir, "scatter.json"),
        {
            "energy_drift_max": float(
                np.abs(record.energies - record.energies[0]).max()
            ),
            "norm_drift_max": float(record.norm_drift.max()),
            "discarded_total": float(record.discarded.sum()),
        },
    )
    return [
        "scatter_init.npz",
        "scatter_final.npz",
        "scatter_excess.csv",
        "scatter_entropy.csv",
        "scatter_energy.csv",
        "scatter.json",
    ]


def stage_detect(config: RunConfig, outdir: str):
    model, method = config.model, config.method
    length, vacuum_energy, _, bands = load_spectrum(
        os.path.join(outdir, "spectrum.npz")
    )
    labels = list(config.detectors) or [method.band_label]
    lh_small = build_hamiltonian(model.group, model.coupling, length, "PBC")
    detectors = {}
    for label in labels:
        if label not in bands:
            raise ValueError(f"detector species '{label}' not in spectrum output")
        band = bands[label]
        m = kspace_local_matrix(band, lh_small)
        w = minimize_spread(
            band, m, vacuum_energy, restarts=method.restarts, seed=method.seed
        )
        detectors[label] = build_detector(
            w.state, length, method.detector_width, species=label
        )

    state0, _ = load_state(os.path.join(outdir, "scatter_init.npz"))
    vacuum, _ = load_state(os.path.join(outdir, "vacuum_state.npz"))
    lh, h_mpo = _large_chain(config)

    interior, _ = epsilon_functional(
        vacuum, lh, vacuum, operator=np.eye(3**method.detector_width),
        width=method.detector_width,
    )
    observables = {"epsilon": lambda t, st: epsilon_functional(st, lh, vacuum)[1]}
    for label, det in detectors.items():
        observables[f"signal|{label}"] = detection_observable(det, vacuum)
        observables[f"weighted|{label}"] = (
            lambda t, st, rho=det.rho, wd=det.width: epsilon_functional(
                st, lh, vacuum, operator=rho, width=wd
            )[1]
        )
    record = run_scattering(state0, h_mpo, _evolution_config(config), observables)

    eps = record.series["epsilon"]
    eps_interior = eps[:, interior]
    weighted = [record.series[f"weighted|{label}"] for label in labels]
    coefficients, residual = calibrate_coefficients(
        eps_interior[0], [w[0] for w in weighted]
    )
    bound = np.array(
        [
            resonance_lower_bound(
                eps_interior[i], [w[i] for w in weighted], coefficients
            )
            for i in range(len(record.times))
        ]
    )

    written = []
    _series_csv(os.path.join(outdir, "epsilon.csv"), record.times, eps, "e")
    written.append("epsilon.csv")
    half = method.detector_width // 2
    scan_sites = range(half, config.model.L_large - half)
    for label in labels:
        name = f"detect_signal_{safe_label(label)}.csv"
        _series_csv(
            os.path.join(outdir, name),
            record.times,
            record.series[f"signal|{label}"],
            "j",
            indices=scan_sites,
        )
        written.append(name)
    _series_csv(
        os.path.join(outdir, "bound.csv"),
        record.times,
        bound,
        "j",
        indices=interior,
    )
    written.append("bound.csv")
    peak = float(eps_interior[0].max())
    write_json(
        os.path.join(outdir, "detect.json"),
        {
            "species": labels,
            "coefficients": [float(c) for c in coefficients],
            "calibration_residual": residual,
            "epsilon_peak_t0": peak,
            "bound_max_t0": float(bound[0].max()),
            "bound_max_all_t": float(bound.max()),
        },
    )
    written.append("detect.json")
    return written


STAGE_FUNCS = {
    "spectrum": stage_spectrum,
    "localize": stage_localize,
    "extract": stage_extract,
    "vacuum": stage_vacuum,
    "lightcone": stage_lightcone,
    "propagator": stage_propagator,
    "scatter": stage_scatter,
    "detect": stage_detect,
}


def run_stage(config: RunConfig, name: str):
    """Dependency check, stage body, manifest update; returns the manifest."""
    outdir = config.out
    os.makedirs(outdir, exist_ok=True)
    manifest = open_manifest(
        outdir, config.to_dict(), config.model.coupling, config.method.seed
    )
    require_inputs(outdir, manifest, name, STAGE_INPUTS[name], PRODUCERS)
    start = time.perf_counter()
    written = STAGE_FUNCS[name](config, outdir)
    wall = time.perf_counter() - start
    outputs = {
        fname: file_checksum(os.path.join(outdir, fname)) for fname in written
    }
    manifest.record_stage(name, wall, STAGE_INPUTS[name], outputs)
    write_manifest(outdir, manifest)
    return manifest


def run_stages(config: RunConfig, names=None):
    chosen = list(names) if names is not None else list(config.stages)
    manifest = None
    for name in STAGES:
        if name in chosen:
            manifest = run_stage(config, name)
    return manifest
