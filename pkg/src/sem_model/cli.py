"""Command-line front end: ``sem-model <command> --config cfg.json``.

Commands: simulate, exact, dynamics, classify, verify.  Output is a set of
named tables written as CSV (``# table: <name>`` blocks) or one JSON
document.  Matrix cells are named ``q_{i}{j}`` with 1-based type indices.

Exit codes: 0 success, 1 a verification check failed, 2 bad config or
arguments, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .classify import check_fine_balance, classify_2x2, decompose, worst_quadruple
from .core import (
    AnimalRoster,
    EMLaw,
    Flavor,
    PairTypeMatrix,
    PopulationCounts,
    PreferenceMatrix,
    RateVector,
    em_law,
    realize_law,
    validate_population,
)
from .dynamics import (
    generator_poisson,
    kernel_bernoulli,
    terminal_expectation,
    terminal_pmf_absorbing,
    transient_distribution,
)
from .engine import FiringProcessSpec, FiringSchedule, read_schedule, run_sem, run_sem_alternative
from .errors import NotFineBalanced, SemError
from .exact import qt_distribution_finebalanced, terminal_distribution_definite
from .rng import derive_seed
from .verify import (
    ModelInputs,
    empirical_pairlists,
    empirical_terminal_pmf,
    gof_compare,
    permutation_oracle_definite,
)

log = logging.getLogger("sem_model")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
EXACT_TOL = 1e-10

FIELDS = ("k", "x", "y", "flavor", "P", "alpha", "beta", "Pi", "schedule", "t", "runs", "seed", "tol", "out", "format")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    pop: PopulationCounts
    flavor: Flavor | None
    prefs: PreferenceMatrix | None
    rates: RateVector | None
    law: EMLaw | None
    schedule: FiringSchedule | None
    t: list[float]
    runs: int
    seed: int
    tol: float
    out: str | None
    format: str

    @property
    def k(self) -> int:
        return self.pop.k

    def model(self) -> ModelInputs:
        """Simulation inputs; a bare EM law is realized with males firing."""
        prefs, rates = self.prefs, self.rates
        if prefs is None:
            prefs, rates = realize_law(self.law)
        if self.schedule is not None:
            spec = FiringProcessSpec.explicit(self.schedule)
        elif rates is not None:
            spec = FiringProcessSpec.from_rates(rates)
        else:
            raise ConfigError("simulation needs firing rates or a schedule")
        return ModelInputs(self.pop, prefs, spec)

    def require_law(self) -> EMLaw:
        if self.law is None:
            raise ConfigError("this command needs an EM law: give Pi, or P with alpha and beta")
        return self.law


def _line_of(raw: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), raw)
    return raw.count("\n", 0, m.start()) + 1 if m else None


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read and validate a strict JSON experiment config.

    Every problem is reported as ``<path>:<line>: <field>: <reason>``.
    """
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")

    def fail(key: str, msg: str):
        line = _line_of(raw, key)
        where = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{where}: {key}: {msg}")

    for key in doc:
        if key not in FIELDS:
            fail(key, f"unknown field (allowed: {', '.join(FIELDS)})")
    for key, val in (overrides or {}).items():
        if val is not None:
            doc[key] = val

    def get(key, kind, default=None):
        if key not in doc:
            return default
        val = doc[key]
        try:
            return kind(val)
        except (SemError, ValueError, TypeError) as exc:
            fail(key, str(exc))

    for key in ("x", "y"):
        if key not in doc:
            raise ConfigError(f"{path}: {key}: required field missing")
        if not isinstance(doc[key], list):
            fail(key, "must be a list of nonnegative integers")
    try:
        pop = validate_population(doc["x"], doc["y"], require_nonempty=True)
    except SemError as exc:
        fail("y" if "equally many" in str(exc) else "x", str(exc))
    if "k" in doc and doc["k"] != pop.k:
        fail("k", f"k={doc['k']} but x and y have {pop.k} entries")

    flavor = get("flavor", Flavor)
    has_p, has_pi = "P" in doc, "Pi" in doc
    if has_p == has_pi:
        fail("Pi" if has_pi else "P", "give exactly one of P (with alpha and beta) or Pi")

    def matrix(key, ctor):
        val = get(key, ctor)
        if val.k != pop.k:
            fail(key, f"must be {pop.k}x{pop.k}")
        return val

    schedule = None
    if "schedule" in doc:
        spath = Path(doc["schedule"])
        if not spath.is_absolute():
            spath = path.parent / spath
        try:
            schedule = read_schedule(spath)
        except OSError as exc:
            fail("schedule", f"cannot read {spath}: {exc.strerror}")
        except SemError as exc:
            fail("schedule", f"{spath}: {exc}")

    prefs = rates = law = None
    if has_p:
        prefs = matrix("P", PreferenceMatrix)
        if ("alpha" in doc) != ("beta" in doc):
            fail("alpha" if "alpha" in doc else "beta", "alpha and beta go together")
        if "alpha" in doc:
            if flavor is None:
                fail("alpha", "rates need a flavor (poisson or bernoulli)")
            rates = get("alpha", lambda a: RateVector(flavor, a, doc["beta"]))
            if rates.k != pop.k:
                fail("alpha", f"rate vectors must have length {pop.k}")
            law = em_law(prefs, rates)
        elif schedule is None:
            fail("P", "P needs alpha and beta, or a schedule")
    else:
        for key in ("alpha", "beta"):
            if key in doc:
                fail(key, "rates are implied by Pi; drop them")
        if flavor is None:
            fail("Pi", "Pi needs a flavor (poisson or bernoulli)")
        law = matrix("Pi", lambda v: EMLaw(flavor, v))
    if schedule is not None:
        try:
            schedule.check_proper(AnimalRoster.from_population(pop))
        except SemError as exc:
            fail("schedule", str(exc))

    tval = doc.get("t", [])
    tlist = tval if isinstance(tval, list) else [tval]
    for t in tlist:
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not t >= 0:
            fail("t", f"times must be nonnegative numbers, got {t!r}")
        if flavor is Flavor.BERNOULLI and t != int(t):
            fail("t", f"Bernoulli times must be integers, got {t!r}")
    runs = get("runs", int, 1)
    if runs < 1:
        fail("runs", "must be at least 1")
    seed = get("seed", int, 0)
    if not 0 <= seed < 2**64:
        fail("seed", "must be an unsigned 64-bit integer")
    tol = get("tol", float, 1e-9)
    if not tol > 0:
        fail("tol", "must be positive")
    fmt = doc.get("format", "csv")
    if fmt not in ("csv", "json"):
        fail("format", "must be csv or json")
    return ExperimentConfig(pop, flavor, prefs, rates, law, schedule, [float(t) for t in tlist],
                            runs, seed, tol, doc.get("out"), fmt)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


class Tables:
    """Ordered named tables with content-equivalent CSV and JSON renderings."""

    def __init__(self, command: str):
        self.command = command
        self.tables: dict[str, tuple[list[str], list[list[Any]]]] = {}

    def add(self, name: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        self.tables[name] = (list(columns), [list(r) for r in rows])

    @staticmethod
    def _cell(v):
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (int, np.integer)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            return None if math.isnan(v) else float(v)
        return v

    def to_json(self) -> str:
        body = {
            name: {"columns": cols, "rows": [[self._cell(v) for v in r] for r in rows]}
            for name, (cols, rows) in self.tables.items()
        }
        return json.dumps({"command": self.command, "tables": body}, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for n, (name, (cols, rows)) in enumerate(self.tables.items()):
            if n:
                buf.write("\n")
            buf.write(f"# table: {name}\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([format(v, ".17g") if isinstance(v, float) else self._cell(v) for v in map(self._cell, r)])
        return buf.getvalue()

    def write(self, fmt: str, out: str | None) -> None:
        text = self.to_json() if fmt == "json" else self.to_csv()
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)


def parse_tables_csv(text: str) -> dict[str, tuple[list[str], list[list[str]]]]:
    """Inverse of the CSV rendering (values stay strings)."""
    out: dict[str, tuple[list[str], list[list[str]]]] = {}
    name = None
    for row in csv.reader(io.StringIO(text)):
        if not row:
            continue
        if row[0].startswith("# table: "):
            name = row[0][len("# table: "):]
            out[name] = ([], [])
        elif not out[name][0]:
            out[name][0].extend(row)
        else:
            out[name][1].append(row)
    return out


def q_columns(k: int, prefix: str = "q_") -> list[str]:
    return [f"{prefix}{i + 1}{j + 1}" for i in range(k) for j in range(k)]


def _cells(m) -> list:
    if isinstance(m, PairTypeMatrix):
        return list(m.cells)
    return [float(v) for v in np.asarray(m).ravel()]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, args) -> Tables:
    model = cfg.model()
    k = cfg.k
    tables = Tables("simulate")
    if args.empirical_pmf:
        pmf, counts = empirical_terminal_pmf(model, cfg.runs, cfg.seed, alternative=args.alternative,
                                             workers=args.workers)
        tables.add("empirical_pmf", q_columns(k) + ["count", "probability"],
                   [_cells(m) + [counts.get(m, 0), p] for m, p in pmf.items()])
        if not args.dump:
            return tables
    sim = run_sem_alternative if args.alternative else run_sem
    rows = []
    for r in range(cfg.runs):
        seed = derive_seed(cfg.seed, r)
        rec = sim(model.pop, None, model.prefs, model.spec, seed)
        rows.append([r, seed, rec.terminal_time, rec.rounds_elapsed, len(rec.jumps), rec.anomalies]
                    + _cells(rec.pattern))
    tables.add("runs", ["run", "seed", "T", "rounds", "jumps", "anomalies"] + q_columns(k), rows)
    return tables


def cmd_exact(cfg: ExperimentConfig, args) -> Tables:
    """Closed forms; they hold for definite mating and fine-balanced laws."""
    pop, k = cfg.pop, cfg.k
    tables = Tables("exact")
    law = cfg.law
    if law is None:
        if not np.all(cfg.prefs.p == 1.0):
            raise NotFineBalanced("with only a schedule, closed forms need P = 1")
    elif not check_fine_balance(law, cfg.tol):
        quad, v = worst_quadruple(law)
        raise NotFineBalanced(
            f"closed forms need a fine-balanced law; quadruple {tuple(i + 1 for i in quad)} is off by {v:.3g}",
            quad, v)
    term = terminal_distribution_definite(pop)
    tables.add("terminal_pmf", q_columns(k) + ["probability"], [_cells(m) + [p] for m, p in term.items()])
    tables.add("terminal_expectation", q_columns(k), [_cells(np.outer(pop.x, pop.y) / pop.n)])
    if cfg.t:
        if law is None:
            raise ConfigError("time-t laws need firing rates or Pi, not only a schedule")
        pmf_rows, mean_rows = [], []
        for t in cfg.t:
            dist = qt_distribution_finebalanced(pop, law, t, tol=cfg.tol)
            pmf_rows += [[t] + _cells(m) + [p] for m, p in dist.items()]
            mean_rows.append([t] + _cells(dist.mean()))
        tables.add("qt_pmf", ["t"] + q_columns(k) + ["probability"], pmf_rows)
        tables.add("expected_qt", ["t"] + q_columns(k), mean_rows)
    return tables


def cmd_dynamics(cfg: ExperimentConfig, args) -> Tables:
    law = cfg.require_law()
    pop, k = cfg.pop, cfg.k
    tables = Tables("dynamics")
    tables.add("terminal_expectation", q_columns(k), [_cells(terminal_expectation(pop, law))])
    absorbing = terminal_pmf_absorbing(pop, law)
    tables.add("terminal_pmf", q_columns(k) + ["probability"], [_cells(m) + [p] for m, p in absorbing.items()])
    rows = []
    for t in cfg.t:
        dist = transient_distribution(pop, law, t)
        rows += [[t] + _cells(m) + [p] for m, p in dist.items()]
    if cfg.t:
        tables.add("transient_pmf", ["t"] + q_columns(k) + ["probability"], rows)
    if args.dump:
        chain = generator_poisson(pop, law) if law.flavor is Flavor.POISSON else kernel_bernoulli(pop, law)
        coo = chain.matrix.tocoo()
        name = "generator" if law.flavor is Flavor.POISSON else "kernel"
        tables.add(name, q_columns(k, "from_q_") + q_columns(k, "to_q_") + ["value"],
                   [_cells(chain.states[a]) + _cells(chain.states[b]) + [float(v)]
                    for a, b, v in sorted(zip(coo.row, coo.col, coo.data))])
    return tables


def cmd_classify(cfg: ExperimentConfig, args) -> Tables:
    law = cfg.require_law()
    k = cfg.k
    tables = Tables("classify")
    tables.add("law", ["flavor"] + q_columns(k, "pi_"), [[law.flavor.value] + _cells(law.pi)])
    fine = check_fine_balance(law, cfg.tol)
    quad, v = worst_quadruple(law)
    tables.add("fine_balance", ["fine_balanced", "tol", "worst_quadruple", "violation"],
               [[fine, cfg.tol, " ".join(str(i + 1) for i in quad), v]])
    if fine:
        dec = decompose(law, max(cfg.tol, 1e-12))
        tables.add("decomposition", ["type", "alpha_bar", "beta_bar"],
                   [[i + 1, a, b] for i, (a, b) in enumerate(zip(dec.alpha_bar, dec.beta_bar))])
    if k == 2:
        tri = classify_2x2(law, cfg.tol)
        tables.add("trichotomy", ["verdict", "discriminant"], [[tri.verdict.value, tri.discriminant]])
    return tables


def cmd_verify(cfg: ExperimentConfig, args) -> tuple[Tables, bool]:
    """Cross-check simulation, exact oracles and recursions on this config."""
    pop = cfg.pop
    model = cfg.model()
    checks: list[tuple[str, bool, float, int, float, float, str]] = []
    law = cfg.law
    plans = []
    if law is not None and cfg.schedule is None:
        plans += [("engine_vs_absorbing", False), ("alternative_vs_absorbing", True)]
    definite = cfg.prefs is not None and np.all(cfg.prefs.p == 1.0)
    if cfg.schedule is not None and definite and pop.n <= 8:
        plans.append(("pairlist_uniform", None))
    mc_total = len(plans)

    if law is not None:
        absorbing = terminal_pmf_absorbing(pop, law)
        u = terminal_expectation(pop, law)
        err = float(np.abs(absorbing.mean() - u).max())
        checks.append(("absorbing_mean_vs_recursion", err <= EXACT_TOL, err, 0, math.nan, math.nan,
                       f"max abs difference {err:.3g}"))
        if check_fine_balance(law, cfg.tol):
            prod = np.outer(pop.x, pop.y) / pop.n
            err = float(np.abs(u - prod).max())
            checks.append(("recursion_vs_product_form", err <= EXACT_TOL, err, 0, math.nan, math.nan,
                           f"max abs difference {err:.3g}"))
            hyper = terminal_distribution_definite(pop)
            err = absorbing.tv(hyper)
            checks.append(("absorbing_vs_hypergeometric", err <= EXACT_TOL, err, 0, math.nan, math.nan,
                           f"tv {err:.3g}"))
    if definite and pop.n <= 8:
        oracle = permutation_oracle_definite(pop)
        err = oracle.tv(terminal_distribution_definite(pop))
        checks.append(("permutation_oracle_vs_hypergeometric", err <= EXACT_TOL, err, 0, math.nan, math.nan,
                       f"tv {err:.3g}"))

    for name, alternative in plans:
        if name == "pairlist_uniform":
            counts = empirical_pairlists(model, cfg.runs, cfg.seed)
            expected = {p: 1.0 / math.factorial(pop.n) for p in permutations(range(pop.n))}
            rep = gof_compare(counts, expected, checks=mc_total)
        else:
            _, counts = empirical_terminal_pmf(model, cfg.runs, cfg.seed, alternative=alternative,
                                               workers=args.workers)
            rep = gof_compare(counts, absorbing, checks=mc_total)
        checks.append((name, rep.passed, rep.statistic, rep.degrees_of_freedom, rep.p_value, rep.tv_distance,
                       f"threshold {rep.threshold:.3g}"))

    ok = all(c[1] for c in checks)
    for name, passed, stat, df, p, tv, note in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}: statistic={stat:.6g} df={df} p={p:.6g} tv={tv:.6g} ({note})",
              file=sys.stderr)
    tables = Tables("verify")
    tables.add("checks", ["check", "passed", "statistic", "df", "p_value", "tv", "note"], [list(c) for c in checks])
    return tables, ok


COMMANDS = {
    "simulate": cmd_simulate,
    "exact": cmd_exact,
    "dynamics": cmd_dynamics,
    "classify": cmd_classify,
    "verify": cmd_verify,
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sem-model", description="Stochastic encounter-mating pair formation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--runs", type=int, help="number of replications")
        p.add_argument("--t", type=_float_list, help="comma-separated evaluation times")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--tol", type=float, help="fine-balance / panmixia tolerance")
        p.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo batches")
        p.add_argument("--alternative", action="store_true", help="use the random-permutation encounter mechanism")
        p.add_argument("--empirical-pmf", action="store_true", help="simulate: tabulate the terminal pattern pmf")
        p.add_argument("--dump", action="store_true", help="also emit per-run records or the chain matrix")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "runs": args.runs, "t": args.t, "out": args.out,
                 "format": args.format, "tol": args.tol}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("population x=%s y=%s, command %s", cfg.pop.x, cfg.pop.y, args.command)
    try:
        result = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SemError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    ok = True
    if isinstance(result, tuple):
        result, ok = result
    result.write(cfg.format, cfg.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
