"""Run configuration: JSON text with matrices as nested arrays.

Top-level sections::

    params          alpha, b, M, g_terms, jumps, Q
    x0              initial state (default: identity)
    vol             kind, sigma0, beta | tau + g
    initial_curve   {"flat": r} | {"file": path} | {"nodes": [[T, f], ...]}
    measure_change  gamma, K
    mc              n_paths, dt, t_end, seed, scheme, chunk_size
    riccati / curve / longterm / accept   command-specific blocks

Errors carry the file position (JSON syntax) or the dotted key path
(structure and values).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import symcone
from .hjm import InitialCurve, VolatilitySpec
from .measure import MeasureChange
from .params import AdmissibleParams, GTerm, LinearDriftMap, make_ray


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending location."""


@dataclass
class RunConfig:
    raw: dict
    source: str

    # -- loading ------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: top level must be an object")
        return cls(raw, source)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        cfg = cls.from_text(text, str(path))
        cfg.base_dir = path.parent
        return cfg

    @classmethod
    def default(cls) -> "RunConfig":
        text = resources.files("affine_hjm").joinpath("data/default_config.json").read_text()
        return cls.from_text(text, "default_config.json")

    base_dir: Path = Path(".")

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        raw = copy.deepcopy(self.raw)
        raw.setdefault("mc", {})["seed"] = int(seed)
        out = RunConfig(raw, self.source)
        out.base_dir = self.base_dir
        return out

    @property
    def hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    # -- typed accessors ----------------------------------------------------

    def section(self, name: str, required: bool = False) -> dict:
        sec = self.raw.get(name)
        if sec is None:
            if required:
                raise ConfigError(f"{self.source}: missing section '{name}'")
            return {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{self.source}: '{name}' must be an object")
        return sec

    def params(self) -> AdmissibleParams:
        sec = self.section("params", required=True)
        d = _get(sec, "params", "dim", int, None)
        alpha = _matrix(sec, "params", "alpha", d=d)
        d = alpha.shape[0]
        b = _matrix(sec, "params", "b", d=d)
        M = _matrix(sec, "params", "M", d=d, symmetric=False, default=np.zeros((d, d)))
        Q = _matrix(sec, "params", "Q", d=d, symmetric=False, default=None)
        g_terms = []
        for i, g in enumerate(_get(sec, "params", "g_terms", list, [])):
            where = f"params.g_terms[{i}]"
            g_terms.append(GTerm(_matrix(g, where, "P", d=d), _matrix(g, where, "L", d=d)))
        jumps = []
        for i, j in enumerate(_get(sec, "params", "jumps", list, [])):
            where = f"params.jumps[{i}]"
            if not isinstance(j, dict):
                raise ConfigError(f"{where}: must be an object")
            try:
                jumps.append(
                    make_ray(
                        _vector(j, where, "v", d),
                        _get(j, where, "theta", float),
                        _get(j, where, "lambda_const", float, 0.0),
                        _matrix(j, where, "L_state", d=d, default=None),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        drift = LinearDriftMap(M, tuple(g_terms))
        kwargs = {} if Q is None else {"Q": Q}
        return AdmissibleParams(alpha, b, drift, tuple(jumps), **kwargs)

    def x0(self, d: int) -> np.ndarray:
        if "x0" not in self.raw:
            return np.eye(d)
        x0 = _matrix(self.raw, "", "x0", d=d)
        try:
            return symcone.require_psd(x0, "x0")
        except symcone.ConeError as exc:
            raise ConfigError(f"x0: {exc}") from None

    def vol(self) -> VolatilitySpec:
        sec = self.section("vol", required=True)
        kind = _get(sec, "vol", "kind", str)
        sigma0 = _matrix(sec, "vol", "sigma0")
        try:
            if kind == "exponential_decay":
                return VolatilitySpec.exponential_decay(sigma0, _get(sec, "vol", "beta", float))
            if kind == "inverse_sqrt":
                return VolatilitySpec.inverse_sqrt(sigma0)
            if kind == "tabulated":
                return VolatilitySpec.tabulated(sigma0, _get(sec, "vol", "tau", list), _get(sec, "vol", "g", list))
        except (ValueError, symcone.ConeError) as exc:
            raise ConfigError(f"vol: {exc}") from None
        raise ConfigError(f"vol.kind: unknown kind {kind!r}")

    def curve(self) -> InitialCurve:
        sec = self.section("initial_curve")
        if not sec:
            return InitialCurve.flat(0.0)
        try:
            if "flat" in sec:
                return InitialCurve.flat(_get(sec, "initial_curve", "flat", float))
            if "file" in sec:
                p = Path(_get(sec, "initial_curve", "file", str))
                return InitialCurve.from_csv(p if p.is_absolute() else self.base_dir / p)
            if "nodes" in sec:
                nodes = np.asarray(_get(sec, "initial_curve", "nodes", list), dtype=float)
                if nodes.ndim != 2 or nodes.shape[1] != 2:
                    raise ValueError("nodes must be a list of [T, f] pairs")
                return InitialCurve(nodes[:, 0], nodes[:, 1])
        except (ValueError, OSError) as exc:
            raise ConfigError(f"initial_curve: {exc}") from None
        raise ConfigError("initial_curve: expected one of 'flat', 'file', 'nodes'")

    def measure(self, d: int, n_rays: int) -> MeasureChange:
        sec = self.section("measure_change")
        gamma = _matrix(sec, "measure_change", "gamma", d=d, symmetric=False, default=None)
        K = _get(sec, "measure_change", "K", list, None)
        try:
            mc = MeasureChange(gamma, None if K is None else tuple(K))
            mc.k_factors(n_rays)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"measure_change: {exc}") from None
        return mc

    def mc(self) -> dict:
        sec = self.section("mc")
        out = {
            "n_paths": _get(sec, "mc", "n_paths", int, 1000),
            "dt": _get(sec, "mc", "dt", float, 2.0**-8),
            "t_end": _get(sec, "mc", "t_end", float, 1.0),
            "seed": _get(sec, "mc", "seed", int, 0),
            "scheme": _get(sec, "mc", "scheme", str, "euler_project"),
            "chunk_size": _get(sec, "mc", "chunk_size", int, 4096),
        }
        if out["n_paths"] < 1 or out["dt"] <= 0 or out["t_end"] <= 0:
            raise ConfigError("mc: n_paths, dt and t_end must be positive")
        if not 0 <= out["seed"] < 2**64:
            raise ConfigError("mc.seed: must lie in [0, 2^64)")
        return out


# ---------------------------------------------------------------------------
# field helpers


_MISSING = object()


def _get(sec: dict, where: str, key: str, typ, default=_MISSING):
    name = f"{where}.{key}" if where else key
    if key not in sec or sec[key] is None:
        if default is _MISSING:
            raise ConfigError(f"{name}: required")
        return default
    val = sec[key]
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {val!r}")
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{name}: expected an integer, got {val!r}")
        return val
    if not isinstance(val, typ):
        raise ConfigError(f"{name}: expected {typ.__name__}, got {type(val).__name__}")
    return val


def _matrix(sec: dict, where: str, key: str, d: int | None = None, symmetric: bool = True, default=_MISSING):
    name = f"{where}.{key}" if where else key
    rows = _get(sec, where, key, list, default)
    if rows is None or isinstance(rows, np.ndarray):
        return rows
    try:
        a = symcone.matrix_from_literal(rows, name, symmetric=symmetric)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if d is not None and a.shape != (d, d):
        raise ConfigError(f"{name}: expected {d} x {d}, got {a.shape[0]} x {a.shape[1]}")
    return a


def _vector(sec: dict, where: str, key: str, d: int) -> np.ndarray:
    v = np.asarray(_get(sec, where, key, list), dtype=float)
    if v.shape != (d,):
        raise ConfigError(f"{where}.{key}: expected a length-{d} vector")
    return v
