"""Command-line front end.

    affine-hjm validate  --config run.json --out results/
    affine-hjm simulate  --config run.json --out results/ [--seed N] [--threads N]
    affine-hjm riccati   ...
    affine-hjm curve     ...
    affine-hjm longterm  ...
    affine-hjm accept    [--config run.json] --out results/

Exit codes: 0 success, 1 configuration error, 2 parameter validation
failure (or a failed acceptance criterion), 3 numerical failure.
Every output file embeds the config hash and the seed; floats are written
in shortest round-trip form, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, hjm, longterm, mc, riccati, symcone
from .config import ConfigError, RunConfig
from .params import InvalidParamsError, validate
from .pathsim import UnsupportedSpecError, simulate, uniform_grid

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

COMMANDS = ("validate", "simulate", "riccati", "curve", "longterm", "accept")


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Output helpers


class Writer:
    def __init__(self, out_dir: Path, cfg: RunConfig, seed: int):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.stamp = {"config_sha256": cfg.hash, "seed": seed}

    def json(self, name: str, payload: dict) -> Path:
        body = dict(self.stamp)
        body.update(payload)
        p = self.out / name
        p.write_text(json.dumps(_plain(body), indent=2, sort_keys=True) + "\n")
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self.out / name
        with open(p, "w", newline="") as fh:
            fh.write(f"# config_sha256={self.stamp['config_sha256']}\n# seed={self.stamp['seed']}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return p


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _flat(m: np.ndarray) -> list:
    d = m.shape[-1]
    return [m[..., i, j] for i in range(d) for j in range(i, d)]


def _entry_names(prefix: str, d: int) -> list[str]:
    return [f"{prefix}_{i + 1}{j + 1}" for i in range(d) for j in range(i, d)]


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(cfg: RunConfig, w: Writer, threads: int) -> int:
    params = cfg.params()
    report = validate(params)
    w.json("validation.json", report.to_dict())
    for c in report.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail} (witness {c.witness:.3e})")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _simulate_from(cfg: RunConfig, threads: int, **kw):
    params = cfg.params()
    s = cfg.mc()
    d = params.dim
    measure = cfg.measure(d, len(params.jumps))
    tg = uniform_grid(s["t_end"], s["dt"])
    ens = simulate(
        params, cfg.x0(d), tg, kw.pop("n_paths", s["n_paths"]), s["seed"], s["scheme"],
        measure=measure, chunk_size=s["chunk_size"], threads=threads, **kw,
    )
    return params, measure, ens


def cmd_simulate(cfg: RunConfig, w: Writer, threads: int) -> int:
    sec = cfg.section("simulate")
    s = cfg.mc()
    record = sec.get("record", [0.0, s["t_end"]])
    params, _, ens = _simulate_from(cfg, threads, record=record)
    d = params.dim
    rows = []
    for p in range(ens.n_paths):
        for j, k in enumerate(ens.record_idx):
            rows.append([p, ens.t_grid[k]] + _flat(ens.states[p, j]))
    w.csv("states.csv", ["path", "t"] + _entry_names("x", d), rows)
    summary = {
        "n_paths": ens.n_paths,
        "scheme": ens.scheme,
        "recorded_times": ens.t_grid[ens.record_idx],
        "mean_state": ens.states.mean(axis=0),
        "mean_jump_counts": ens.jump_counts.mean(axis=0) if ens.jump_counts.size else [],
    }
    if "u" in sec:
        u = symcone.matrix_from_literal(sec["u"], "simulate.u")
        sol = riccati.solve(params, u, s["t_end"])
        est = mc.estimate_laplace(ens, u, s["t_end"])
        exact = riccati.laplace_transform(sol, ens.x0, s["t_end"])
        summary["laplace"] = {"estimate": est.to_dict(), "riccati": exact, "z": (est.value - exact) / est.std_error if est.std_error else 0.0}
    w.json("simulate.json", summary)
    print(f"simulated {ens.n_paths} paths, {len(ens.t_grid) - 1} steps ({ens.scheme})")
    return EXIT_OK


def cmd_riccati(cfg: RunConfig, w: Writer, threads: int) -> int:
    params = cfg.params()
    sec = cfg.section("riccati")
    u = symcone.matrix_from_literal(sec.get("u", np.eye(params.dim).tolist()), "riccati.u")
    t_end = float(sec.get("t_end", 1.0))
    dt = sec.get("dt")
    sol = riccati.solve(params, u, t_end, None if dt is None else float(dt))
    d = params.dim
    rows = [[t, p] + _flat(s) for t, p, s in zip(sol.t_grid, sol.phi, sol.psi)]
    w.csv("riccati.csv", ["t", "phi"] + _entry_names("psi", d), rows)
    x0 = cfg.x0(d)
    w.json("riccati.json", {
        "t_end": t_end,
        "phi": sol.phi[-1],
        "psi": sol.psi[-1],
        "laplace_at_x0": riccati.laplace_transform(sol, x0, t_end),
        "n_projected": sol.n_projected,
        "min_eig_raw": float(sol.min_eig_raw.min()) if sol.min_eig_raw.size else None,
    })
    print(f"phi({t_end}) = {sol.phi[-1]!r}")
    return EXIT_OK


def cmd_curve(cfg: RunConfig, w: Writer, threads: int) -> int:
    sec = cfg.section("curve")
    s = cfg.mc()
    vol, curve = cfg.vol(), cfg.curve()
    n_paths = int(sec.get("n_paths", 1))
    params, measure, ens = _simulate_from(cfg, threads, n_paths=n_paths, keep_paths=True)
    t_eval = sec.get("t_eval", [0.0, s["t_end"]])
    T_max = float(sec.get("T_max", 10.0))
    dT = float(sec.get("dT", 2.0**-6))
    T_out = sec.get("T_out", [1.0, 2.0, 5.0, 10.0])
    T_grid = np.arange(0.0, T_max + 0.5 * dT, dT)
    rows = []
    short = []
    for p, path in enumerate(ens.paths):
        surf = hjm.evolve_forward(params, vol, measure, path, np.concatenate([T_grid, T_out]), curve, t_eval=t_eval)
        for t in surf.t_grid:
            short.append([p, t, hjm.short_rate(surf, t)])
            for T in T_out:
                if T <= t:
                    continue
                f = surf.f[surf._ti(t), surf._Tj(T)]
                rows.append([p, t, T, f, hjm.bond_price(surf, t, T), hjm.yield_direct(surf, t, T)])
    w.csv("curve.csv", ["path", "t", "T", "f", "P", "Y"], rows)
    w.json("curve.json", {"n_paths": n_paths, "vol_kind": vol.kind, "t_eval": t_eval, "T_out": T_out,
                          "short_rate": short})
    print(f"evolved {n_paths} forward curve(s)")
    return EXIT_OK


def cmd_longterm(cfg: RunConfig, w: Writer, threads: int) -> int:
    sec = cfg.section("longterm")
    vol, curve = cfg.vol(), cfg.curve()
    ladder = sec.get("T_ladder", list(longterm.DEFAULT_LADDER))
    ts = sec.get("t_probe", [0.5])
    n_paths = int(sec.get("n_paths", 1))
    cls = longterm.classify_decay(vol)
    params, measure, ens = _simulate_from(cfg, threads, n_paths=n_paths, keep_paths=True)
    ell0 = float(sec["ell0"]) if "ell0" in sec else curve.ell0()
    out = {"classification": cls.classification, "decay_slope": cls.slope, "warning": cls.warning}
    rows = []
    if cls.classification == "infinite":
        out["ell"] = None
        out["diagnostics"] = "volatility does not decay; the long-term yield is infinite"
    else:
        ells, mus = [], []
        for p, path in enumerate(ens.paths):
            prof = longterm.asymptotic_profile(params, vol, path, ell0)
            ells.append(prof.ell)
            mus.append(prof.mu_inf)
            for t in ts:
                Y = longterm.yield_ladder(params, vol, measure, path, float(t), curve, ladder)
                ex = longterm.extrapolate_long_yield(float(t), ladder, Y)
                for T, y in zip(ladder, Y):
                    rows.append([p, t, T, y])
                rows.append([p, t, "inf", float(ex.limit)])
        out.update({
            "t_grid": ens.t_grid,
            "ell": ells,
            "mu_inf_final": [m[-1] for m in mus],
            "ell0": ell0,
            "diagnostics": {"T_ladder": ladder, "t_probe": ts},
        })
    w.csv("yield_ladder.csv", ["path", "t", "T", "Y"], rows)
    w.json("longterm.json", out)
    print(f"classification: {cls.classification}")
    return EXIT_OK


def cmd_accept(cfg: RunConfig, w: Writer, threads: int) -> int:
    sec = cfg.section("accept")
    scale = float(sec.get("scale", 1.0))
    if not scale > 0:
        raise ConfigError("accept.scale: must be positive")
    only = sec.get("only")
    if only is not None:
        if not isinstance(only, list) or not all(isinstance(i, int) and 1 <= i <= len(acceptance.CRITERIA) for i in only):
            raise ConfigError(f"accept.only: expected a list of criterion numbers 1..{len(acceptance.CRITERIA)}")
        only = set(only)
    seed = int(cfg.raw.get("mc", {}).get("seed", acceptance.SEED))
    results = acceptance.run_all(scale=scale, seed=seed, threads=threads, only=only)
    passed = all(r.passed for r in results)
    w.json(
        "acceptance.json",
        {"passed": passed, "scale": scale, "only": None if only is None else sorted(only), "criteria": [r.to_dict() for r in results]},
    )
    print(f"acceptance: {sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if passed else EXIT_VALIDATION


HANDLERS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "riccati": cmd_riccati,
    "curve": cmd_curve,
    "longterm": cmd_longterm,
    "accept": cmd_accept,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="affine-hjm", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON run configuration (default: bundled example)")
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--seed", type=int, help="overrides mc.seed")
    ap.add_argument("--threads", type=int, help="worker threads (env AFFINE_HJM_THREADS)")
    return ap


def run(command: str, config_path=None, output_dir="results", seed=None, threads=None) -> int:
    try:
        cfg = RunConfig.default() if config_path is None else RunConfig.from_file(config_path)
        cfg = cfg.with_seed(seed)
        if threads is None:
            env = os.environ.get("AFFINE_HJM_THREADS")
            try:
                threads = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"AFFINE_HJM_THREADS: expected an integer, got {env!r}") from None
        if threads < 1:
            raise ConfigError("--threads must be positive")
        if command == "accept":
            seed_used = int(cfg.raw.get("mc", {}).get("seed", acceptance.SEED))
        else:
            seed_used = cfg.mc()["seed"]
        w = Writer(Path(output_dir), cfg, seed_used)
        return HANDLERS[command](cfg, w, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParamsError as exc:
        failed = [c.name for c in exc.args[0].checks if not c.passed]
        print(f"invalid parameters: failed checks {failed}", file=sys.stderr)
        return EXIT_VALIDATION
    except (symcone.ConeError, symcone.DimensionError, UnsupportedSpecError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (riccati.RiccatiEscapeError, symcone.ConvergenceError, longterm.LongTermYieldError,
            FloatingPointError, NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
