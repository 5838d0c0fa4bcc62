"""Plain-text key=value configuration.

One ``key = value`` per line; ``#`` starts a comment; blank lines are
ignored.  Lists are comma separated.  A list of floats may also be written
``geom(a, b, n)`` for n geometrically spaced values from a to b.  Every key
has a default (see ``KEYS``), unknown keys are rejected, and ``emit`` writes
the canonical form: every key, sorted, with values in ``repr`` notation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

__all__ = ["ConfigError", "Config", "KEYS", "parse_config", "emit_config", "load_config"]

INIT_KINDS = ("shear", "random", "elsasser", "snapshot")
SCALING_COMPONENTS = ("tangential", "normal", "full")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + msg)
        self.line = line
        self.key = key


# -- value codecs -----------------------------------------------------------------


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _str(s: str) -> str:
    return s


_GEOM = re.compile(r"^geom\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)$")


def _floats(s: str) -> tuple:
    s = s.strip()
    if not s:
        return ()
    m = _GEOM.match(s)
    if m:
        a, b, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
        if a <= 0 or b <= 0 or n < 2:
            raise ValueError("geom needs positive ends and n >= 2")
        return tuple(float(v) for v in np.geomspace(a, b, n))
    return tuple(_float(p) for p in s.split(","))


def _ints(s: str) -> tuple:
    s = s.strip()
    return tuple(int(p) for p in s.split(",")) if s else ()


def _cases(s: str) -> tuple:
    """component:p:i[:order] entries, comma separated."""
    out = []
    for item in s.split(","):
        parts = [p.strip() for p in item.split(":")]
        if len(parts) not in (3, 4) or parts[0] not in SCALING_COMPONENTS:
            raise ValueError(f"bad case {item.strip()!r}; expected component:p:i[:order]")
        order = int(parts[3]) if len(parts) == 4 else None
        out.append((parts[0], float(parts[1]), float(parts[2]), order))
    return tuple(out)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(
                ":".join([c, repr(p), repr(i)] + ([str(o)] if o is not None else [])) for c, p, i, o in v
            )
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    help: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _even4(v):
    return v >= 4 and v % 2 == 0


DEFAULT_SWEEP = tuple(float(v) for v in np.geomspace(1e-2, 1e-3, 5))
DEFAULT_EPS = tuple(float(v) for v in np.geomspace(1e-4, 1e-2, 5))
DEFAULT_CASES = (
    ("tangential", 2.0, 1.0, None),
    ("tangential", 2.0, 2.0, None),
    ("normal", 2.0, 0.0, None),
    ("normal", 2.0, 1.0, None),
    ("full", 1.0, 0.0, None),
    ("full", 2.0, 0.0, None),
)

KEYS: dict[str, Key] = {
    "grid.nx": Key(_int, 32, _even4, "Fourier modes in x (even, >= 4)"),
    "grid.ny": Key(_int, 32, _even4, "Fourier modes in y (even, >= 4)"),
    "grid.nz": Key(_int, 32, lambda v: v >= 2, "cosine/sine modes in z"),
    "phys.nu": Key(_float, 0.0, _nonneg, "viscosity"),
    "phys.mu": Key(_float, 0.0, _nonneg, "magnetic diffusivity"),
    "time.dt": Key(_float, 5e-4, _pos, "time step"),
    "time.T": Key(_float, 0.25, _pos, "final time"),
    "init.kind": Key(_str, "random", lambda v: v in INIT_KINDS, "shear | random | elsasser | snapshot"),
    "init.seed": Key(_int, 0, _nonneg, "sampler seed (H uses seed + 1)"),
    "init.decay": Key(_float, 4.0, lambda v: v > 2, "spectral decay exponent of the sampler"),
    "init.kmax": Key(_int, 1, _pos, "largest sampled wavenumber"),
    "init.amplitude": Key(_float, 0.5, _nonneg, "L2 norm of sampled u and H; shear amplitude"),
    "init.file": Key(_str, "", None, "snapshot path for init.kind = snapshot"),
    "output.dir": Key(_str, "out", None, "output directory"),
    "output.record_interval": Key(_float, 1e-2, _pos, "time between diagnostics rows"),
    "output.snapshots": Key(_floats, (), lambda v: all(t >= 0 for t in v), "times at which to write snapshots"),
    "guard.threshold": Key(_float, 1e3, lambda v: v > 1, "H^3 growth factor that trips the blow-up guard"),
    "study.k": Key(_int, 1, lambda v: v >= 1, "order k of the function-space hierarchy"),
    "study.nu": Key(_floats, DEFAULT_SWEEP, lambda v: all(x > 0 for x in v), "viscosity sweep"),
    "study.mu": Key(_floats, (), lambda v: all(x > 0 for x in v), "diffusivity sweep (empty: tied to study.nu)"),
    "study.norms": Key(_ints, (1, 2, 3), lambda v: bool(v) and all(0 <= s <= 4 for s in v), "H^s norms compared"),
    "study.fit_window": Key(_ints, (), lambda v: len(v) in (0, 2), "first, last sweep index in the fit (empty: all)"),
    "corrector.k": Key(_int, 1, lambda v: v >= 1, "corrector order k"),
    "corrector.eps": Key(_floats, DEFAULT_EPS, lambda v: all(0 < e < 0.25 for e in v), "layer parameter sweep"),
    "corrector.cases": Key(_cases, DEFAULT_CASES, bool, "component:p:i[:order] norms to fit"),
    "corrector.tolerance": Key(_float, 0.05, _pos, "allowed exponent deviation"),
    "corrector.nx": Key(_int, 16, _even4, "wall-data modes per direction"),
    "verify.samples": Key(_int, 12, lambda v: v >= 10, "random fields per identity check"),
    "verify.nz": Key(_int, 16, lambda v: v >= 8, "grid size for the identity suite"),
}


class Config(dict):
    """Validated configuration: a dict over ``KEYS`` with derived helpers."""

    def sweep(self) -> list[tuple[float, float]]:
        nus = self["study.nu"]
        mus = self["study.mu"] or nus
        return list(zip(nus, mus))

    def fit_slice(self) -> slice:
        w = self["study.fit_window"]
        return slice(w[0], w[1] + 1) if w else slice(None)

    def replace(self, **updates) -> "Config":
        """Copy with ``a__b=...`` standing for key ``a.b``."""
        text = {k: _fmt(v) for k, v in self.items()}
        for name, v in updates.items():
            key = name.replace("__", ".")
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}", key=key)
            text[key] = _fmt(v)
        return parse_config("\n".join(f"{k} = {v}" for k, v in text.items()))


def parse_config(text: str) -> Config:
    values = {k: entry.default for k, entry in KEYS.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in seen:
            raise ConfigError(f"key {key!r} already set on line {seen[key]}", lineno, key)
        seen[key] = lineno
        try:
            values[key] = KEYS[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})", lineno, key) from None
    _validate(values, seen)
    return Config(values)


def _validate(values: dict, seen: dict):
    for key, entry in KEYS.items():
        if entry.check is not None and not entry.check(values[key]):
            raise ConfigError(f"invalid value for {key}: {_fmt(values[key])!r} ({entry.help})", seen.get(key), key)
    nus, mus = values["study.nu"], values["study.mu"]
    if len(nus) < 4:
        raise ConfigError(f"study.nu needs at least 4 sweep points, got {len(nus)}", seen.get("study.nu"), "study.nu")
    if mus and len(mus) != len(nus):
        raise ConfigError("study.mu must match study.nu in length", seen.get("study.mu"), "study.mu")
    w = values["study.fit_window"]
    if w and not (0 <= w[0] < w[1] < len(nus)):
        raise ConfigError("study.fit_window must be two increasing sweep indices", seen.get("study.fit_window"), "study.fit_window")
    if len(values["corrector.eps"]) < 5:
        raise ConfigError("corrector.eps needs at least 5 values", seen.get("corrector.eps"), "corrector.eps")
    if values["init.kind"] == "snapshot" and not values["init.file"]:
        raise ConfigError("init.kind = snapshot requires init.file", seen.get("init.kind"), "init.file")
    T, dt = values["time.T"], values["time.dt"]
    if abs(T / dt - round(T / dt)) > 1e-9 * T / dt:
        raise ConfigError("time.T must be a whole number of steps time.dt", seen.get("time.T"), "time.T")


def emit_config(cfg: Config) -> str:
    return "".join(f"{k} = {_fmt(cfg[k])}\n" for k in sorted(KEYS))


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
