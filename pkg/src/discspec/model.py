"""Birth-death models with killing and their two base measures.

A :class:`DiscreteModel` carries death rates ``a_n`` (``a_0 = 0``), birth rates
``b_n`` and killing rates ``c_n`` on ``{0, 1, 2, ...}``.  The reversible measure
``mu`` and its companion ``nu_hat_n = 1 / (mu_n b_n)`` are kept in log space by
:class:`MeasureCache`, since they under/overflow doubles long before the
indices that matter for tail questions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ModelError
from .expr import Expr
from .logscalar import LogScalar


class Rate:
    """A sequence indexed by ``n >= 0``: formula, finite table, or callable.

    ``overrides`` replaces finitely many entries, which is how formula families
    with a singular start (``b_0 = 0**gamma``) are normalized.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], *, label: str = "<func>",
                 overrides: Mapping[int, float] | None = None, table_len: int | None = None):
        self._func = func
        self.label = label
        self.overrides = {int(k): float(v) for k, v in (overrides or {}).items()}
        self.table_len = table_len

    @classmethod
    def from_expr(cls, source: str, overrides=None, var: str = "n") -> "Rate":
        expr = Expr(source, var)
        return cls(expr, label=source, overrides=overrides)

    @classmethod
    def constant(cls, value: float) -> "Rate":
        return cls.from_expr(repr(float(value)))

    @classmethod
    def from_table(cls, values: Sequence[float], extension: str | Callable | None = None,
                   overrides=None) -> "Rate":
        """Tabulated prefix plus declared behaviour past its end.

        ``extension`` is ``None``/``"error"`` (indexing past the table is an
        error) or a formula string / callable giving the asymptotic continuation.
        """
        table = np.asarray(values, dtype=float)
        if isinstance(extension, str) and extension != "error":
            ext = Expr(extension)
        elif callable(extension):
            ext = extension
        else:
            ext = None

        def func(n):
            n = np.asarray(n)
            out = np.empty(n.shape, dtype=float)
            inside = n < table.size
            out[inside] = table[n[inside].astype(int)]
            if np.any(~inside):
                if ext is None:
                    first = int(n[~inside].min())
                    raise ModelError(f"index {first} past end of table of length {table.size} "
                                     "(extension 'error')")
                out[~inside] = ext(n[~inside].astype(float))
            return out

        return cls(func, label=f"table[{table.size}]", overrides=overrides,
                   table_len=table.size if ext is None else None)

    @classmethod
    def coerce(cls, value, overrides=None) -> "Rate":
        if isinstance(value, Rate):
            if overrides:
                return cls(value._func, label=value.label,
                           overrides={**value.overrides, **overrides},
                           table_len=value.table_len)
            return value
        if isinstance(value, str):
            return cls.from_expr(value, overrides)
        if isinstance(value, (int, float)):
            return cls.from_expr(repr(float(value)), overrides)
        if callable(value):
            return cls(value, overrides=overrides)
        if isinstance(value, Mapping):
            return cls.from_table(value["table"], value.get("formula", "error"), overrides)
        return cls.from_table(value, None, overrides)

    def __call__(self, n) -> np.ndarray:
        n = np.asarray(n)
        with np.errstate(all="ignore"):
            out = np.array(self._func(n.astype(float)), dtype=float, copy=True)
        out = np.broadcast_to(out, n.shape).copy()
        for k, v in self.overrides.items():
            out[n == k] = v
        return out

    def __repr__(self):
        extra = f", overrides={self.overrides}" if self.overrides else ""
        return f"Rate({self.label!r}{extra})"


@dataclass
class DiscreteModel:
    """Tridiagonal generator with killing: rates ``a`` (down), ``b`` (up), ``c`` (kill)."""

    a: Rate
    b: Rate
    c: Rate = field(default_factory=lambda: Rate.constant(0.0))
    name: str = ""

    def __post_init__(self):
        self.a = Rate.coerce(self.a)
        self.b = Rate.coerce(self.b)
        self.c = Rate.coerce(self.c)

    @property
    def max_index(self) -> int | None:
        """Largest usable index when some rate is a table with no extension."""
        lens = [r.table_len for r in (self.a, self.b, self.c) if r.table_len is not None]
        return min(lens) - 1 if lens else None

    def rates(self, n_max: int, start: int = 0):
        """Arrays ``(a, b, c)`` on ``start..n_max`` with ``a_0`` forced to 0."""
        n = np.arange(start, n_max + 1)
        a = self.a(n)
        if start == 0 and a.size:
            a[0] = 0.0
        return a, self.b(n), self.c(n)

    def killing_free(self, n_probe: int = 1000) -> bool:
        _, _, c = self.rates(n_probe)
        return bool(np.all(c == 0.0))

    def to_json(self) -> dict:
        def enc(r: Rate):
            return r.label
        out = {"kind": "discrete", "a": enc(self.a), "b": enc(self.b), "c": enc(self.c)}
        ov = {k: {str(i): v for i, v in r.overrides.items()}
              for k, r in (("a", self.a), ("b", self.b), ("c", self.c)) if r.overrides}
        if ov:
            out["overrides"] = ov
        if self.name:
            out["name"] = self.name
        return out


@dataclass
class ValidationIssue:
    n: int
    field: str
    message: str


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok

    def messages(self) -> list[str]:
        return [f"n={i.n}: {i.field}: {i.message}" for i in self.issues]


def validate_model(model: DiscreteModel, n_probe: int = 1000) -> ValidationReport:
    """Probe ``n = 0..n_probe`` for sign violations and non-finite rates.

    Reports the first offending index per rate; an empty report means the model
    is valid on the probe range.
    """
    report = ValidationReport()
    limit = model.max_index
    hi = n_probe if limit is None else min(n_probe, limit)
    try:
        a, b, c = model.rates(hi)
    except ModelError as exc:
        report.issues.append(ValidationIssue(-1, "model", str(exc)))
        return report
    checks = (
        ("b", b, np.arange(b.size), lambda x: x > 0, "birth rate must satisfy b_n > 0 (n >= 0)"),
        ("a", a[1:], np.arange(1, a.size), lambda x: x > 0, "death rate must satisfy a_n > 0 (n >= 1)"),
        ("c", c, np.arange(c.size), lambda x: x >= 0, "killing rate must satisfy c_n >= 0"),
    )
    for name, vals, idx, good, msg in checks:
        finite = np.isfinite(vals)
        if not np.all(finite):
            k = int(idx[np.argmin(finite)])
            report.issues.append(ValidationIssue(k, name, f"non-finite value {vals[k - idx[0]]!r}"))
            continue
        ok = good(vals)
        if not np.all(ok):
            k = int(idx[np.argmin(ok)])
            report.issues.append(ValidationIssue(k, name, f"{msg}; got {vals[k - idx[0]]!r}"))
    return report


def require_valid(model: DiscreteModel, n_probe: int) -> None:
    report = validate_model(model, n_probe)
    if not report.ok:
        raise ModelError("invalid model: " + "; ".join(report.messages()))


class MeasureCache:
    """Grow-only log-space arrays of ``mu_n`` and ``nu_hat_n`` for one model.

    ``log_mu[n] - log_mu[n-1] = log b_{n-1} - log a_n`` with ``log_mu[0] = 0``;
    ``log_nu_hat[n] = -(log_mu[n] + log b_n)``.
    """

    def __init__(self, model: DiscreteModel):
        self.model = model
        self.log_mu = np.zeros(0)
        self.log_nu_hat = np.zeros(0)
        self.log_b = np.zeros(0)
        self.log_a = np.zeros(0)

    def __len__(self):
        return self.log_mu.size

    def ensure(self, n: int) -> None:
        have = self.log_mu.size
        if n < have:
            return
        new_top = max(n, 2 * have - 1, 63)
        if self.model.max_index is not None:
            new_top = max(n, min(new_top, self.model.max_index))
        a, b, _ = self.model.rates(new_top, start=have)
        if np.any(~(b > 0)) or (have == 0 and np.any(~(a[1:] > 0))) or (have > 0 and np.any(~(a > 0))):
            raise ModelError("nonpositive or non-finite rate while extending measures; "
                             "run validate_model for the offending index")
        with np.errstate(divide="ignore"):
            log_a, log_b = np.log(a), np.log(b)
        self.log_a = np.concatenate([self.log_a, log_a])
        self.log_b = np.concatenate([self.log_b, log_b])
        if have == 0:
            steps = self.log_b[:-1] - self.log_a[1:]
            log_mu = np.cumsum(np.concatenate([[0.0], steps]))
        else:
            steps = self.log_b[have - 1:-1] - self.log_a[have:]
            log_mu = np.cumsum(np.concatenate([[self.log_mu[-1]], steps]))[1:]
        self.log_mu = np.concatenate([self.log_mu, log_mu])
        self.log_nu_hat = -(self.log_mu + self.log_b)

    def log_mu_array(self, n_max: int) -> np.ndarray:
        self.ensure(n_max)
        return self.log_mu[: n_max + 1]

    def log_nu_hat_array(self, n_max: int) -> np.ndarray:
        self.ensure(n_max)
        return self.log_nu_hat[: n_max + 1]

    def log_b_array(self, n_max: int) -> np.ndarray:
        self.ensure(n_max)
        return self.log_b[: n_max + 1]


def mu(cache: MeasureCache, n: int) -> LogScalar:
    """``mu_n = b_0 ... b_{n-1} / (a_1 ... a_n)`` with ``mu_0 = 1``."""
    cache.ensure(n)
    return LogScalar(1, float(cache.log_mu[n]))


def nu_hat(cache: MeasureCache, n: int) -> LogScalar:
    """``nu_hat_n = 1 / (mu_n b_n)``."""
    cache.ensure(n)
    return LogScalar(1, float(cache.log_nu_hat[n]))


def from_b_and_mu(b, mu_seq, name: str = "") -> DiscreteModel:
    """Build the killing-free model with prescribed birth rates and measure.

    ``a_n = mu_{n-1} b_{n-1} / mu_n``; ``mu`` is rescaled so that ``mu_0 = 1``.
    """
    b = Rate.coerce(b)
    mu_rate = Rate.coerce(mu_seq)
    mu0 = float(mu_rate(np.array([0]))[0])
    b0 = float(b(np.array([0]))[0])
    if not (mu0 > 0 and b0 > 0):
        raise ModelError("from_b_and_mu needs b_0 > 0 and mu_0 > 0")

    def a_func(n):
        n = np.asarray(n, dtype=float)
        prev = np.maximum(n - 1, 0)
        m_prev, m_cur, b_prev = mu_rate(prev), mu_rate(n), b(prev)
        if np.any(~(m_cur > 0)) or np.any(~(b_prev > 0)):
            bad = n[~((m_cur > 0) & (b_prev > 0))]
            raise ModelError(f"from_b_and_mu: nonpositive b or mu near n={int(bad.min())}")
        with np.errstate(all="ignore"):
            out = np.exp(np.log(m_prev) + np.log(b_prev) - np.log(m_cur))
        return np.where(n == 0, 0.0, out)

    return DiscreteModel(a=Rate(a_func, label=f"mu-derived(b={b.label}, mu={mu_rate.label})"),
                         b=b, c=Rate.constant(0.0), name=name)


def model_from_dict(spec: Mapping) -> DiscreteModel:
    """Decode the JSON model file layout (``"kind": "discrete"``)."""
    if spec.get("kind", "discrete") != "discrete":
        raise ModelError(f"expected kind 'discrete', got {spec.get('kind')!r}")
    overrides = spec.get("overrides", {}) or {}
    extension = spec.get("extension", "error")
    rates = {}
    for key in ("a", "b", "c"):
        raw = spec.get(key, 0.0 if key == "c" else None)
        if raw is None:
            raise ModelError(f"model is missing rate {key!r}")
        ov = {int(k): float(v) for k, v in overrides.get(key, {}).items()}
        if isinstance(raw, list):
            if extension not in ("error", "formula"):
                raise ModelError(f"unknown extension {extension!r}")
            formula = spec.get(f"{key}_formula")
            if extension == "formula" and formula is None:
                raise ModelError(f"extension 'formula' needs '{key}_formula' for tabulated {key!r}")
            rates[key] = Rate.from_table(raw, formula if extension == "formula" else None, ov)
        else:
            rates[key] = Rate.coerce(raw, ov)
    return DiscreteModel(rates["a"], rates["b"], rates["c"], name=str(spec.get("name", "")))


def load_model_file(path: str | Path):
    """Read a model JSON file; returns a discrete or continuous model by ``kind``."""
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from None
    kind = spec.get("kind", "discrete")
    if kind == "discrete":
        return model_from_dict(spec)
    if kind == "continuous":
        from .continuous import diffusion_from_dict
        return diffusion_from_dict(spec)
    raise ModelError(f"unknown model kind {kind!r}")


def log_rates(model: DiscreteModel, n_max: int):
    """Plain-float rate arrays plus ``u = a/b`` and ``v = c/b`` on ``0..n_max``."""
    a, b, c = model.rates(n_max)
    return a, b, c, a / b, c / b

