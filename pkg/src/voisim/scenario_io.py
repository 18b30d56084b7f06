"""Scenario files and run exports.

Scenario documents are JSON with schema tag "voisim-scenario/1":

    {
      "schema": "voisim-scenario/1",
      "kind": "broadcast" | "multiaccess",
      "horizon": 1000,
      "sources": [ {"A": ..., "C": ..., "W": ..., "V": ..., "m0": ..., "M0": ...}, ... ],
      "links":   [ {"rate": 0.3} | {"rate": {"values": [...], "transition": [[...]], "initial": 0}}, ... ],
      "price":  <rows>,        one row per sender
      "weight": <rows>,        one row per monitor estimate
      "policy": "voi",         optional default policy spec
      "seeds":  [0, 1, 2],     optional default batch seeds
      "output": "runs",        optional default output directory
      "name":   "..."          optional
    }

Matrix fields accept a nested row-major array, a scalar s (meaning s times
the identity), {"diag": [...]}, or {"schedule": [form, ...]} with at least
horizon+1 entries for time-varying systems. Vector fields accept a list or a
scalar (constant vector). Row fields (price, weight) accept a scalar for
every row and step, or a list with one entry per row, each entry a scalar or
a per-step list. Dimensions are inferred from the first non-scalar matrix
form; a source given entirely in scalars needs explicit "n" (and "m").

Exports: a per-run step table and a batch summary table (CSV, '#'-prefixed
schema comment, floats written in shortest round-trip form so re-reading is
exact), and a static vector plot of the squared-error and event traces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from numbers import Real
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .channels import ConstantRate, MarkovRate
from .engine import BatchSummary, RunMetrics, paired_stats
from .errors import ConfigurationError, LogicFault
from .models import GaussMarkovModel, Scenario
from .policies import parse_policy

SCENARIO_SCHEMA = "voisim-scenario/1"
TABLE_SCHEMA = "voisim-table/1"
BATCH_SCHEMA = "voisim-batch/1"

_TOP_KEYS = {"schema", "kind", "horizon", "sources", "links", "price", "weight"}
_TOP_OPTIONAL = {"name", "policy", "seeds", "output"}
_SOURCE_KEYS = {"A", "C", "W", "V", "m0", "M0", "n", "m"}


def builtin_scenarios() -> tuple:
    """Names of the scenario files shipped inside the package."""
    root = resources.files(__package__) / "scenarios"
    return tuple(sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json")))


def _fail(key: str, msg: str) -> None:
    raise ConfigurationError(f"{key}: {msg}")


def _is_number(x) -> bool:
    return isinstance(x, Real) and not isinstance(x, bool)


def _form_dims(form) -> Optional[tuple]:
    """(rows, cols) implied by a matrix form, or None for scalars."""
    if _is_number(form):
        return None
    if isinstance(form, dict):
        if "diag" in form:
            s = len(form["diag"])
            return (s, s)
        if "schedule" in form and form["schedule"]:
            return _form_dims(form["schedule"][0])
        return None
    if isinstance(form, list) and form and isinstance(form[0], list):
        return (len(form), len(form[0]))
    return None


def _one_matrix(form, rows: int, cols: int, key: str) -> np.ndarray:
    if _is_number(form):
        if rows != cols:
            _fail(key, f"scalar shorthand needs a square matrix, this one is {rows}x{cols}")
        return float(form) * np.eye(rows)
    if isinstance(form, dict) and set(form) == {"diag"}:
        d = np.asarray(form["diag"], dtype=float)
        if rows != cols or d.shape != (rows,):
            _fail(key, f"diag shorthand needs {rows} values for a {rows}x{cols} matrix")
        return np.diag(d)
    if isinstance(form, list):
        try:
            arr = np.asarray(form, dtype=float)
        except (TypeError, ValueError):
            _fail(key, "nested array entries must be numbers")
        if arr.shape != (rows, cols):
            _fail(key, f"array has shape {arr.shape}, expected ({rows}, {cols})")
        return arr
    _fail(key, 'expected a number, {"diag": [...]}, or a nested row-major array')


def _matrix_field(form, steps: int, rows: int, cols: int, key: str):
    """One matrix or a stacked (steps, rows, cols) schedule."""
    if isinstance(form, dict) and "schedule" in form:
        if set(form) != {"schedule"}:
            _fail(key, 'schedule form takes exactly the key "schedule"')
        entries = form["schedule"]
        if not isinstance(entries, list) or len(entries) < steps:
            _fail(key, f"schedule needs at least {steps} entries, got {len(entries) if isinstance(entries, list) else 'non-list'}")
        return np.stack(
            [_one_matrix(e, rows, cols, f"{key}.schedule[{i}]") for i, e in enumerate(entries[:steps])]
        )
    return _one_matrix(form, rows, cols, key)


def _vector_field(form, size: int, key: str) -> np.ndarray:
    if _is_number(form):
        return np.full(size, float(form))
    if isinstance(form, list):
        try:
            arr = np.asarray(form, dtype=float)
        except (TypeError, ValueError):
            _fail(key, "vector entries must be numbers")
        if arr.shape != (size,):
            _fail(key, f"vector has length {arr.shape}, expected ({size},)")
        return arr
    _fail(key, "expected a number or a flat array")


def _source_dims(d: dict, key: str) -> tuple:
    n = d.get("n")
    if n is None:
        for field in ("A", "W", "M0"):
            dims = _form_dims(d.get(field))
            if dims is not None:
                n = dims[0]
                break
    if n is None and isinstance(d.get("m0"), list):
        n = len(d["m0"])
    if n is None:
        _fail(key, 'state dimension not inferable; give A as a nested array or add "n"')
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        _fail(f"{key}.n", f"expected a positive integer, got {n!r}")
    m = d.get("m")
    if m is None:
        for field in ("C", "V"):
            dims = _form_dims(d.get(field))
            if dims is not None:
                m = dims[0]
                break
    if m is None:
        m = n
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        _fail(f"{key}.m", f"expected a positive integer, got {m!r}")
    return n, m


def _source_from_dict(d, horizon: int, key: str) -> GaussMarkovModel:
    if not isinstance(d, dict):
        _fail(key, "each source must be an object")
    unknown = set(d) - _SOURCE_KEYS
    if unknown:
        _fail(key, f"unknown keys {sorted(unknown)}")
    missing = {"A", "C", "W", "V", "m0", "M0"} - set(d)
    if missing:
        _fail(key, f"missing keys {sorted(missing)}")
    n, m = _source_dims(d, key)
    steps = horizon + 1
    A = _matrix_field(d["A"], steps, n, n, f"{key}.A")
    C = _matrix_field(d["C"], steps, m, n, f"{key}.C")
    W = _matrix_field(d["W"], steps, n, n, f"{key}.W")
    V = _matrix_field(d["V"], steps, m, m, f"{key}.V")
    m0 = _vector_field(d["m0"], n, f"{key}.m0")
    M0 = _one_matrix(d["M0"], n, n, f"{key}.M0")
    try:
        return GaussMarkovModel.constant(A, C, W, V, m0, M0, horizon)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{key}.{exc}") from None


def _link_from_dict(d, key: str):
    if not isinstance(d, dict) or set(d) != {"rate"}:
        _fail(key, 'each link must be an object with exactly the key "rate"')
    rate = d["rate"]
    try:
        if _is_number(rate):
            proc = ConstantRate(float(rate))
            proc.validate()
            return proc
        if isinstance(rate, dict):
            unknown = set(rate) - {"values", "transition", "initial"}
            if unknown:
                _fail(f"{key}.rate", f"unknown keys {sorted(unknown)}")
            if not {"values", "transition"} <= set(rate):
                _fail(f"{key}.rate", 'chain form needs "values" and "transition"')
            return MarkovRate.create(rate["values"], rate["transition"], rate.get("initial", 0))
    except ConfigurationError as exc:
        raise ConfigurationError(f"{key}.rate: {exc}") from None
    _fail(f"{key}.rate", "expected a number or a chain object")


def _rows_field(form, n_rows: int, steps: int, key: str) -> np.ndarray:
    if _is_number(form):
        return np.full((n_rows, steps), float(form))
    if isinstance(form, list):
        if len(form) != n_rows:
            _fail(key, f"expected {n_rows} rows, got {len(form)}")
        out = np.empty((n_rows, steps))
        for r, entry in enumerate(form):
            if _is_number(entry):
                out[r] = float(entry)
            elif isinstance(entry, list):
                arr = np.asarray(entry, dtype=float)
                if arr.ndim != 1 or arr.shape[0] < steps:
                    _fail(f"{key}[{r}]", f"per-step row needs at least {steps} values")
                out[r] = arr[:steps]
            else:
                _fail(f"{key}[{r}]", "expected a number or a per-step array")
        return out
    _fail(key, "expected a number or a list with one entry per row")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """A loaded scenario document: the Scenario plus config-level extras."""

    scenario: Scenario
    seeds: Optional[tuple]
    output: Optional[str]


def scenario_from_dict(data: dict, fallback_name: str = "") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("scenario document must be a JSON object")
    unknown = set(data) - _TOP_KEYS - _TOP_OPTIONAL
    if unknown:
        _fail("scenario", f"unknown keys {sorted(unknown)}")
    missing = _TOP_KEYS - set(data)
    if missing:
        _fail("scenario", f"missing keys {sorted(missing)}")
    if data["schema"] != SCENARIO_SCHEMA:
        _fail("schema", f"expected {SCENARIO_SCHEMA!r}, got {data['schema']!r}")
    kind = data["kind"]
    if kind not in ("broadcast", "multiaccess"):
        _fail("kind", f"expected broadcast or multiaccess, got {kind!r}")
    horizon = data["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 0:
        _fail("horizon", f"expected an integer >= 0, got {horizon!r}")
    if not isinstance(data["sources"], list) or not data["sources"]:
        _fail("sources", "expected a non-empty list")
    if not isinstance(data["links"], list) or not data["links"]:
        _fail("links", "expected a non-empty list")
    sources = tuple(
        _source_from_dict(s, horizon, f"sources[{j}]") for j, s in enumerate(data["sources"])
    )
    links = tuple(_link_from_dict(l, f"links[{i}]") for i, l in enumerate(data["links"]))
    steps = horizon + 1
    n_senders = 1 if kind == "broadcast" else len(sources)
    price = _rows_field(data["price"], n_senders, steps, "price")
    weight = _rows_field(data["weight"], len(links), steps, "weight")
    policy = data.get("policy", "voi")
    if not isinstance(policy, str):
        _fail("policy", "expected a policy spec string")
    parse_policy(policy)
    name = data.get("name", fallback_name)
    if not isinstance(name, str):
        _fail("name", "expected a string")
    scenario = Scenario(
        kind=kind,
        sources=sources,
        links=links,
        price=price,
        weight=weight,
        name=name,
        default_policy=policy,
    )
    scenario.validate()

    seeds = data.get("seeds")
    if seeds is not None:
        if not isinstance(seeds, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds
        ):
            _fail("seeds", "expected a list of integers >= 0")
        seeds = tuple(seeds)
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        _fail("output", "expected a string path")
    return ScenarioConfig(scenario=scenario, seeds=seeds, output=output)


def load_config(ref: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario document from a built-in name or a file path."""
    name = str(ref)
    if name in builtin_scenarios():
        text = (resources.files(__package__) / "scenarios" / f"{name}.json").read_text()
        fallback = name
    else:
        path = Path(ref)
        if not path.is_file():
            builtins = ", ".join(builtin_scenarios())
            raise ConfigurationError(
                f"unknown scenario {name!r}: not a file and not a built-in (built-ins: {builtins})"
            )
        text = path.read_text()
        fallback = path.stem
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{name}: invalid JSON: {exc}") from None
    return scenario_from_dict(data, fallback_name=fallback)


def load_scenario(ref: Union[str, Path]) -> Scenario:
    """The Scenario of a document (see load_config for the extras)."""
    return load_config(ref).scenario


def _compress_schedule(sched: np.ndarray) -> object:
    """Emit a single nested array when all steps coincide, else a schedule."""
    constant = sched.strides[0] == 0 or bool(np.all(sched == sched[0]))
    if constant:
        return sched[0].tolist()
    return {"schedule": [m.tolist() for m in sched]}


def _compress_rows(rows: np.ndarray) -> object:
    if np.all(rows == rows.flat[0]):
        return float(rows.flat[0])
    out = []
    for r in range(rows.shape[0]):
        row = rows[r]
        out.append(float(row[0]) if np.all(row == row[0]) else row.tolist())
    return out


def dump_scenario(scenario: Scenario) -> dict:
    """Scenario back to its document form; load(dump(s)) equals s exactly."""
    doc = {
        "schema": SCENARIO_SCHEMA,
        "name": scenario.name,
        "kind": scenario.kind,
        "horizon": scenario.horizon,
        "policy": scenario.default_policy,
        "sources": [],
        "links": [],
        "price": _compress_rows(scenario.price),
        "weight": _compress_rows(scenario.weight),
    }
    for src in scenario.sources:
        doc["sources"].append(
            {
                "n": src.n,
                "m": src.m,
                "A": _compress_schedule(src.A),
                "C": _compress_schedule(src.C),
                "W": _compress_schedule(src.W),
                "V": _compress_schedule(src.V),
                "m0": src.m0.tolist(),
                "M0": src.M0.tolist(),
            }
        )
    for proc in scenario.links:
        if isinstance(proc, ConstantRate):
            doc["links"].append({"rate": proc.value})
        else:
            doc["links"].append(
                {
                    "rate": {
                        "values": proc.values.tolist(),
                        "transition": proc.transition.tolist(),
                        "initial": proc.initial,
                    }
                }
            )
    return doc


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(dump_scenario(scenario), indent=2) + "\n")


# --- exports -----------------------------------------------------------------


@dataclass
class ExportBundle:
    """Paths written for one command invocation."""

    table: Optional[Path] = None
    plot: Optional[Path] = None
    batch_table: Optional[Path] = None


def _cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    # repr of a float is its shortest exact round-trip form.
    return repr(float(x))


def _table_columns(metrics: RunMetrics) -> list:
    L = metrics.err_sq.shape[0]
    T = metrics.sent.shape[0]
    steps = metrics.horizon + 1
    cols = [("k", np.arange(steps), True)]
    for i in range(L):
        cols.append((f"err_sq_{i + 1}", metrics.err_sq[i], False))
    for t in range(T):
        cols.append((f"sent_{t + 1}", metrics.sent[t], True))
    for i in range(L):
        cols.append((f"gamma_{i + 1}", metrics.gamma[i], True))
    for t in range(T):
        cols.append((f"gain_{t + 1}", metrics.voi_gain[t], False))
    if metrics.voi_priority is not None:
        for t in range(T):
            cols.append((f"priority_{t + 1}", metrics.voi_priority[t], False))
    for i in range(L):
        cols.append((f"rate_{i + 1}", metrics.rates[i], False))
    return cols


def export_run(metrics: RunMetrics, format: str, path: Union[str, Path]) -> None:
    """Write one run as `table` (CSV) or `plot` (vector graphic)."""
    if metrics.err_sq is None:
        raise LogicFault("export needs a run executed with traces collected")
    if format == "table":
        _write_table(metrics, Path(path))
    elif format == "plot":
        _write_plot(metrics, Path(path))
    else:
        raise ConfigurationError(f"unknown export format {format!r}; expected table or plot")


def _write_table(metrics: RunMetrics, path: Path) -> None:
    cols = _table_columns(metrics)
    lines = [f"# {TABLE_SCHEMA}", ",".join(name for name, _, _ in cols)]
    steps = metrics.horizon + 1
    for k in range(steps):
        lines.append(
            ",".join(
                str(int(col[k])) if is_int else _cell(col[k]) for _, col, is_int in cols
            )
        )
    path.write_text("\n".join(lines) + "\n")


def _write_plot(metrics: RunMetrics, path: Path) -> None:
    from matplotlib.figure import Figure

    steps = np.arange(metrics.horizon + 1)
    L = metrics.err_sq.shape[0]
    fig = Figure(figsize=(9.0, 5.4))
    ax_err, ax_ev = fig.subplots(2, 1, sharex=True, height_ratios=[3, 1])
    for i in range(L):
        ax_err.plot(steps, metrics.err_sq[i], lw=0.8, label=f"station {i + 1}")
    ax_err.set_ylabel("squared error")
    ax_err.legend(loc="upper right", fontsize=8)
    ax_err.set_title(
        f"{metrics.scenario_name or metrics.kind} / {metrics.policy_label} / seed {metrics.seed}"
    )
    for i in range(L):
        if metrics.kind == "broadcast":
            sent = metrics.sent[0].astype(bool)
        else:
            sent = metrics.sent[i].astype(bool)
        lost = sent & (metrics.gamma[i] == 0)
        ax_ev.plot(steps[sent], np.full(sent.sum(), i + 1), "|", ms=8, color="tab:blue")
        ax_ev.plot(steps[lost], np.full(lost.sum(), i + 1), "x", ms=5, color="tab:red")
    ax_ev.set_ylim(0.4, L + 0.6)
    ax_ev.set_yticks(range(1, L + 1), [f"link {i + 1}" for i in range(L)])
    ax_ev.set_xlabel("step")
    fig.savefig(path)


def export_batch(summary: BatchSummary, path: Union[str, Path]) -> None:
    """Batch summary CSV: one row per policy, paired against the first."""
    L = summary.policies[0].total_mse.shape[1]
    header = ["policy", "runs", "phi_mean", "phi_se"]
    for i in range(L):
        header += [f"mse_mean_{i + 1}", f"mse_se_{i + 1}"]
    for i in range(L):
        header += [f"tx_mean_{i + 1}", f"tx_se_{i + 1}"]
    for i in range(L):
        header += [f"loss_mean_{i + 1}", f"loss_se_{i + 1}"]
    header += ["dphi_mean", "dphi_se", "dphi_t"]
    base = summary.policies[0]
    lines = [f"# {BATCH_SCHEMA}", ",".join(header)]
    for runs in summary.policies:
        s = runs.summary()
        row = [runs.label, str(runs.phi.shape[0]), _cell(s["phi_mean"]), _cell(s["phi_se"])]
        for block in ("mse", "tx", "loss"):
            for i in range(L):
                row += [_cell(s[f"{block}_mean"][i]), _cell(s[f"{block}_se"][i])]
        d = paired_stats(runs.phi, base.phi)
        row += [_cell(d.mean), _cell(d.se), _cell(d.t)]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
