"""Mode pipelines, report export and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from atomlink import analysis, bloch, montecarlo_sim as mc, rate_planner, tweezer_holo
from atomlink.harness.scenario import Scenario
from atomlink.quantum_core import FRINGE_ANGLE_FACTOR
from atomlink.streams import substream

MANIFEST_NAME = "manifest.json"


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover - source checkout
        return "0+unknown"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _finite(v: float):
    return float(v) if math.isfinite(v) else None


@dataclass(frozen=True)
class RunManifest:
    scenario_digest: str
    tool_version: str
    seed: int | None
    mode: str
    started: str
    finished: str
    outputs: dict[str, str]  # relative path -> sha256

    def to_dict(self) -> dict:
        return {
            "scenario_digest": self.scenario_digest,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "mode": self.mode,
            "started": self.started,
            "finished": self.finished,
            "outputs": dict(sorted(self.outputs.items())),
        }


def verify_manifest(out_dir: str | Path) -> list[str]:
    """Relative paths whose current digest differs from the manifest."""
    out_dir = Path(out_dir)
    data = json.loads((out_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
    bad = []
    for rel, digest in data["outputs"].items():
        p = out_dir / rel
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(rel)
    return bad


# ---------------------------------------------------------------------------
# exports


def export_report(results: dict, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write tables (``fmt="table"``) or plot columns (``fmt="plotdata"``).

    ``results`` may contain ``"table"`` (rows from :func:`analysis.table_rows`),
    ``"fringe"`` (angles, survival per detector), ``"profile"`` (time, observed,
    model) and ``"scan_map"`` (2D totals). Missing or empty entries give
    header-only files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "table":
        rows = results.get("table") or []
        n = results.get("n_channels", 10)
        p = out_dir / "table_i.csv"
        analysis.table_csv(rows, n, p)
        written.append(p)
    elif fmt == "plotdata":
        if "fringe" in results:
            p = out_dir / "fringe.dat"
            cols = results["fringe"] or ([], [], [])
            _columns(p, ["angle_rad", "survival_DH", "survival_DV"], cols)
            written.append(p)
        if "profile" in results:
            p = out_dir / "profile.dat"
            cols = results["profile"] or ([], [], [])
            _columns(p, ["t_ns", "observed", "model"], cols)
            written.append(p)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return written


def _columns(path: Path, names: list[str], cols) -> None:
    lines = ["# " + " ".join(names)]
    for row in zip(*cols):
        lines.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# pipelines


def _chain(s: dict) -> mc.ChannelChain:
    kw = {k: s[k] for k in ("p_init", "eta_ext", "eta_fiber", "eta_det", "detection_window")}
    if s["eta_net"] is not None:
        kw["eta_net"] = s["eta_net"]
    if s["background_rate"] is not None:
        kw["background_rate"] = s["background_rate"]
    return mc.ChannelChain(**kw)


def _sequence(s: dict, seed: int, n_sites: int, **over) -> mc.SequenceConfig:
    kw = dict(s, n_sites=n_sites, rng_seed=seed)
    kw.update(over)
    return mc.SequenceConfig(**kw)


def _run_scan(sc: Scenario, out: Path, threads: int) -> dict:
    p = sc.section("scan")
    layouts = tweezer_holo.scan_grid(tweezer_holo.SiteLayout(), p["extent"], p["steps"], "xy")
    cfg = mc.ScanConfig(p["trials"], p["exposure_ms"], p["loading_probability"], p["background_rate"], sc.seed)
    res = mc.run_scan_simulation(layouts, fluorescence_rate=p["fluorescence_rate"], config=cfg, optimum=p["optimum"])
    hdir = out / "histograms"
    hdir.mkdir()
    for i in range(len(layouts)):
        edges, counts = analysis.histogram(res.counts[i].ravel(), 1.0, 0.0, float(res.counts[i].max()) + 1)
        lines = ["counts,frequency"] + [f"{int(e)},{int(c)}" for e, c in zip(edges[:-1], counts)]
        (hdir / f"layout_{i:03d}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    steps = p["steps"]
    grid = res.totals.reshape(steps, steps) if steps > 1 else res.totals.reshape(1, 1)
    np.savetxt(out / "scan_map.csv", grid, fmt="%d", delimiter=",")
    best, value = tweezer_holo.argmax_scan(res.totals)
    summary = {"best_index": best, "best_total": value, "best_offset_um": list(layouts[best].r_ref)}
    _dump_json(out / "summary.json", summary)
    return summary


def _run_fluorescence(sc: Scenario, out: Path, threads: int) -> dict:
    chain = _chain(sc.section("chain"))
    cfg = _sequence(sc.section("sequence"), sc.seed, chain.n_channels)
    run = mc.run_fluorescence_sequence(cfg, chain, threads=threads)
    mc.write_records(out / "records.jsonl", run.records, {"mode": "fluorescence", "n_trials": run.n_trials})
    probs = analysis.conditional_probs(run.records, run.presence, run.n_trials, chain.detection_window)
    bg = analysis.background_rate(run.records, len(run.presence) * run.n_trials, run.slot_ns, chain.n_channels)
    export_report({"table": analysis.table_rows(probs, chain, bg.rate_hz), "n_channels": chain.n_channels}, "table", out)
    xt = analysis.crosstalk_matrix(run.records, run.presence, run.n_trials, chain.detection_window)
    np.savetxt(out / "crosstalk.csv", xt.values, fmt="%.6e", delimiter=",")
    win = analysis._in_window(run.records, 150.0)
    edges, counts = analysis.histogram(win["timestamp_ns"], 1.0, 0.0, 150.0)
    _columns(out / "emission_profile.dat", ["t_ns", "counts"], (edges[:-1], counts))
    summary = {
        "attempts_present": probs.attempts_present,
        "p_present": [_finite(v) for v in probs.p_present],
        "p_absent": [_finite(v) for v in probs.p_absent],
        "eta_net": [_finite(v) for v in analysis.infer_net_coupling(probs.p_present, chain)],
        "background_hz": bg.rate_hz,
        "max_crosstalk": _finite(xt.max_offdiagonal()),
    }
    _dump_json(out / "summary.json", summary)
    return summary


def _run_entanglement(sc: Scenario, out: Path, threads: int) -> dict:
    chain = _chain(sc.section("chain"))
    e = sc.section("entanglement")
    seq = dict(sc.section("sequence"))
    seq["trials_per_cycle"] = min(seq["trials_per_cycle"], 30)
    imp = mc.Imperfections.budget(_sequence(seq, sc.seed, chain.n_channels), e["tilt"]) if e["imperfect"] else mc.Imperfections()
    imp = mc.Imperfections(**{**imp.__dict__, "init_failure": e["init_failure"]})
    angles = np.linspace(0.0, np.pi, e["angles"], endpoint=False)
    surv = np.zeros((2, len(angles)), dtype=np.int64)
    tot = np.zeros((2, len(angles)), dtype=np.int64)
    all_records = []
    for k, theta in enumerate(angles):
        cfg = _sequence(seq, sc.seed, chain.n_channels, n_sequences=e["sequences_per_angle"])
        gen_seed = int(substream(sc.seed, f"angle/{k}").integers(2**63))
        run = mc.run_entanglement_sequence(
            cfg, chain, mc.AnalyzerSetting(float(theta), e["basis"]), imp, gen_seed, channel=e["channel"], threads=threads
        )
        rec = run.records.copy()
        rec["sequence_id"] += k * cfg.n_sequences
        all_records.append(rec)
        for d, (s, n) in run.survival_counts().items():
            surv[d, k], tot[d, k] = s, n
    mc.write_records(out / "records.jsonl", np.concatenate(all_records), {"mode": "entanglement", "basis": e["basis"]})
    fits = {}
    for d, name in ((mc.DETECTOR_H, "DH"), (mc.DETECTOR_V, "DV")):
        f = analysis.fit_fringe(angles, surv[d], tot[d], angle_factor=FRINGE_ANGLE_FACTOR)
        fits[name] = {"A": f.A, "B": f.B, "C": f.C, "stderr": f.stderr, "visibility": f.visibility, "visibility_2A": f.visibility_2a}
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(tot > 0, surv / np.maximum(tot, 1), np.nan)
    export_report({"fringe": (angles, frac[0], frac[1])}, "plotdata", out)
    summary = {"angles": angles, "survivals": surv, "heralds": tot, "fits": fits}
    _dump_json(out / "fringe_fit.json", summary)
    return summary


def _run_fit_bloch(sc: Scenario, out: Path, threads: int) -> dict:
    p = sc.section("fit-bloch")
    truth = None
    if p["profile"]:
        data = np.loadtxt(p["profile"], ndmin=2)
        t, counts = data[:, 0], data[:, 1]
        binw = float(t[1] - t[0])
        start = float(t[0])
    else:
        exc = bloch.reference_excitation()
        truth = {
            "fwhm": exc.pulse.fwhm,
            "peak": exc.pulse.peak,
            "detuning": exc.detuning,
            "dephasing": exc.dephasing,
            "t0": exc.pulse.t0,
        }
        prof = bloch.model_profile(truth, 150, kind=p["pulse_family"])
        counts = substream(sc.seed, "fit-bloch/counts").poisson(p["counts"] * prof).astype(float)
        binw, start = 1.0, 0.0
        t = np.arange(150, dtype=float)
    fit = bloch.fit_profile(counts, p["pulse_family"], bin=binw, start=start, max_iter=p["max_iter"])
    model = bloch.model_profile(fit.values, len(counts), binw, start, p["pulse_family"])
    export_report({"profile": (t, counts / counts.sum(), model)}, "plotdata", out)
    summary = {
        "values": fit.values,
        "stderr": fit.stderr,
        "values_mhz": {k: fit.values[k] / bloch.mhz(1.0) for k in ("peak", "detuning", "dephasing")},
        "iterations": fit.result.n_iter,
        "cost": fit.result.cost,
        "truth": truth,
    }
    _dump_json(out / "fit_result.json", summary)
    return summary


def _run_fit_fringe(sc: Scenario, out: Path, threads: int) -> dict:
    p = sc.section("fit-fringe")
    if p["data"]:
        data = np.loadtxt(p["data"], delimiter=",", ndmin=2, comments="#")
        angles, s, n = data[:, 0], data[:, 1].astype(int), data[:, 2].astype(int)
    else:
        angles = np.linspace(0.0, np.pi, p["angles"], endpoint=False)
        prob = np.clip(p["A"] * np.sin(p["angle_factor"] * angles + p["B"]) + p["C"], 0, 1)
        n = np.full(angles.size, p["trials"])
        s = substream(sc.seed, "fit-fringe/data").binomial(n, prob)
    f = analysis.fit_fringe(angles, s, n, angle_factor=p["angle_factor"])
    export_report({"fringe": (angles, s / n, np.full(angles.size, np.nan))}, "plotdata", out)
    summary = {"A": f.A, "B": f.B, "C": f.C, "stderr": f.stderr, "visibility": f.visibility, "visibility_2A": f.visibility_2a}
    _dump_json(out / "fringe_fit.json", summary)
    return summary


def _run_wgs(sc: Scenario, out: Path, threads: int) -> dict:
    p = sc.section("wgs")
    lay = tweezer_holo.SiteLayout((0.0, 0.0, 0.0), (p["spacing"], 0.0, 0.0), p["n_sites"])
    pos = tweezer_holo.target_positions(lay)
    pos = pos - pos.mean(axis=0)
    mask, metrics = tweezer_holo.wgs_synthesize(pos, p["grid"], p["iterations"], sc.seed, pitch=p["pitch"])
    tweezer_holo.save_mask(mask, out / "mask.phm")
    summary = {
        "uniformity": metrics.uniformity,
        "efficiency": metrics.efficiency,
        "intensities": metrics.intensities,
        "history": metrics.history,
    }
    _dump_json(out / "metrics.json", summary)
    return summary


def _run_plan(sc: Scenario, out: Path, threads: int) -> dict:
    params = rate_planner.LinkParams(**sc.section("plan"))
    text = rate_planner.report(params)
    (out / "plan_report.txt").write_text(text, encoding="utf-8")
    return {"report": text}


PIPELINES = {
    "scan": _run_scan,
    "fluorescence": _run_fluorescence,
    "entanglement": _run_entanglement,
    "fit-bloch": _run_fit_bloch,
    "fit-fringe": _run_fit_fringe,
    "wgs": _run_wgs,
    "plan": _run_plan,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(scenario: Scenario, out_dir: str | Path, threads: int = 1) -> RunManifest:
    """Execute the scenario's pipeline and write outputs plus ``manifest.json``.

    Outputs are produced in a staging directory and moved into ``out_dir``
    only on success, so a failing run leaves nothing behind.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        PIPELINES[scenario.mode](scenario, stage, threads)
        (stage / "scenario.json").write_text(
            json.dumps(scenario.canonical(), sort_keys=True, indent=2, default=_jsonable) + "\n", encoding="utf-8"
        )
        files = sorted(p for p in stage.rglob("*") if p.is_file())
        outputs = {p.relative_to(stage).as_posix(): sha256_file(p) for p in files}
        for p in files:
            dest = out_dir / p.relative_to(stage)
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(p, dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    manifest = RunManifest(scenario.digest(), tool_version(), scenario.seed, scenario.mode, started, _now(), outputs)
    _dump_json(out_dir / MANIFEST_NAME, manifest.to_dict())
    return manifest
