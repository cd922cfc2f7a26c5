"""``sections run --config cfg.json --out results/``: deterministic report bundles.

Exit codes: 0 ok, 2 config error, 3 precondition failure, 4 internal
invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .config import ANALYSES, ConfigError, config_hash, expand_grid, expand_radii, parse_config
from .metric_core import (
    DomainError,
    FiniteMetricSpace,
    structure_from_document,
    validate_metric,
)
from .model_spaces import (
    RNG_ALGORITHM,
    SectionFamilySpec,
    build_euclidean_foliation,
    build_heisenberg,
    generate_section,
)
from .regularity import (
    PreconditionError,
    check_ball_inclusion,
    check_theorem_chain,
    comparability_constant,
    fit_regularity,
)
from .section_analysis import (
    PowerModulus,
    TripleSet,
    check_quasi_conformal,
    check_quasi_symmetry,
    compute_ell_eta,
    eccentricity,
    enumerate_triples,
    fit_eta,
    minimal_holder_constant,
    minimal_lipschitz_constant,
    section_geometry,
)

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_INTERNAL = 0, 2, 3, 4


class InvariantBreach(RuntimeError):
    """A result contradicts a property that holds by construction."""


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def closure(config: dict) -> list[str]:
    """Requested analyses plus their prerequisites, in execution order."""
    eta_kind = config["eta"]["kind"]
    eta_deps = {"fitted": ["fit-eta"], "lipschitz": ["lipschitz"], "power": []}[eta_kind]
    deps = {
        "fit-eta": ["triples"],
        "ell-eta": eta_deps,
        "qc-check": eta_deps + ["triples"],
        "lemma": ["ell-eta"],
        "chain": eta_deps + ["ell-eta", "ahlfors", "comparability"],
    }
    wanted: set[str] = set()
    stack = list(config["analyses"])
    while stack:
        a = stack.pop()
        if a not in wanted:
            wanted.add(a)
            stack.extend(deps.get(a, []))
    return [a for a in ANALYSES if a in wanted]


class Run:
    """State of one run: the model, sections and already computed results."""

    def __init__(self, config: dict):
        self.config = config
        self.results: dict[str, Any] = {}
        self.csv: dict[str, list] = {}
        self.ids = None
        self.model = None
        self.tau = float(config["tau"])
        self._build()

    def _build(self):
        cfg = self.config
        seed = cfg["seed"]
        if cfg["model"] == "document":
            self.space, self.q, section, self.ids = structure_from_document(cfg["structure"])
            if section is None:
                raise DomainError("structure document carries no section")
            self.phi, self.psi = section, None
            self.generation = {}
            return
        base = expand_grid(cfg["base_grid"])
        fiber = expand_grid(cfg["fiber_grid"]).ravel()
        if cfg["model"] == "euclidean":
            self.model = build_euclidean_foliation(base, fiber)
        else:
            self.model = build_heisenberg(base, fiber)
        self.space, self.q = self.model.space, self.model.quotient
        self.phi = generate_section(self.model, SectionFamilySpec.from_dict(cfg["section"], seed))
        self.psi = None
        if "test_section" in cfg:
            self.psi = generate_section(self.model, SectionFamilySpec.from_dict(cfg["test_section"], seed + 1))
        self.generation = {"phi": self.phi.meta, "psi": None if self.psi is None else self.psi.meta}

    # -- shared inputs -------------------------------------------------------

    def geometry(self, which: str = "phi"):
        key = f"_geo_{which}"
        if not hasattr(self, key):
            setattr(self, key, section_geometry(self.space, self.q, getattr(self, which)))
        return getattr(self, key)

    def radii(self) -> np.ndarray:
        return expand_radii(self.config["radius_grid"])

    def centers(self) -> np.ndarray:
        spec = self.config["centers"]
        m = self.q.n_bases
        if spec == "all":
            out = np.arange(m)
        elif isinstance(spec, dict):
            out = np.arange(spec["start"], spec["stop"], spec.get("step", 1))
        else:
            out = np.asarray(spec, dtype=np.int64)
        if len(out) == 0 or out.min() < 0 or out.max() >= m:
            raise DomainError("centers must be known base ids")
        return out

    def probes(self) -> np.ndarray:
        spec = self.config["probes"]
        sections = [self.phi.assignment] + ([] if self.psi is None else [self.psi.assignment])
        if spec == "all":
            return np.arange(self.space.size)
        if spec == "section":
            return np.unique(np.concatenate(sections))
        rng = np.random.Generator(np.random.PCG64(self.config["seed"]))
        count = min(spec["count"], self.space.size)
        chosen = rng.choice(self.space.size, size=count, replace=False)
        return np.unique(np.concatenate([chosen] + sections))

    def eta(self, chain: bool = False):
        kind = self.config["eta"]["kind"]
        if kind == "power":
            return PowerModulus(float(self.config["eta"]["coefficient"]),
                                float(self.config["eta"].get("exponent", 1.0)))
        if kind == "lipschitz":
            L = self.results["lipschitz"]["L"]
            if chain and self.psi is not None:
                L = max(L, minimal_lipschitz_constant(self.space, self.q, self.psi,
                                                      self.geometry("psi")).value)
            return PowerModulus(L, 1.0)
        if chain and self.psi is not None:
            recs = TripleSet.concat([self._triples, enumerate_triples(self.space, self.q, self.psi,
                                                                      self.geometry("psi"))])
            return fit_eta(recs)
        return self._fitted

    # -- analyses ------------------------------------------------------------

    def a_validate(self):
        n = self.space.size
        limit = self.config["validate_max_points"]
        subset = None
        space = self.space
        if n > limit:
            rng = np.random.Generator(np.random.PCG64(self.config["seed"]))
            subset = np.sort(rng.choice(n, size=limit, replace=False))
            space = FiniteMetricSpace(matrix=self.space.matrix(subset))
        verdict = validate_metric(space, tol=self.tau)
        if subset is not None:
            for v in verdict.violations:
                v["points"] = [int(subset[i]) for i in v["points"]]
        out = verdict.to_dict()
        out["points_checked"] = space.size
        out["subset"] = None if subset is None else subset.tolist()
        return out

    def a_triples(self):
        self._triples = enumerate_triples(self.space, self.q, self.phi, self.geometry())
        rec = self._triples
        self.csv["triples"] = [["y1", "y2", "y3", "t", "R"]] + [list(r) for r in rec]
        return {"count": len(rec), "skipped": rec.skipped,
                "t_range": [float(rec.t.min()), float(rec.t.max())] if len(rec) else None,
                "R_range": [float(rec.R.min()), float(rec.R.max())] if len(rec) else None}

    def a_fit_eta(self):
        self._fitted = fit_eta(self._triples)
        verdict = check_quasi_symmetry(self._triples, self._fitted, self.tau)
        if not verdict.passed:
            raise InvariantBreach("fitted envelope fails on its own records")
        return {"eta": self._fitted.to_dict(), "self_check": verdict.to_dict(),
                "note": "monotone envelope; not a homeomorphism"}

    def a_lipschitz(self):
        return minimal_lipschitz_constant(self.space, self.q, self.phi, self.geometry()).to_dict()

    def a_holder(self):
        est = minimal_holder_constant(self.space, self.q, self.phi,
                                      float(self.config["holder_alpha"]), self.geometry())
        return est.to_dict()

    def a_ell_eta(self):
        eta = self.eta()
        res = compute_ell_eta(self.space, self.q, self.phi, eta, self.probes(),
                              ceiling=float(self.config["eta_ceiling"]), geometry=self.geometry())
        if res.diverged:
            raise PreconditionError("ell_eta exceeds the configured ceiling")
        self._ell = res.value
        out = res.to_dict()
        out["eta"] = eta.to_dict()
        out["quantified_over"] = "all sampled bases"
        return out

    def a_eccentricity(self):
        spec = self.config.get("eccentricity", {})
        bases = spec.get("bases", [self.q.n_bases // 2])
        radii = spec.get("radii", self.radii().tolist())
        recs = [eccentricity(self.space, self.q, self.phi, b, r, self.geometry()).to_dict()
                for b in bases for r in radii]
        return {"records": recs}

    def a_qc_check(self):
        eta = self.eta()
        delta = float(self.config["delta"])
        H = float(self.config["qc_H"])
        probes = self.probes()
        out = {}
        for label, d in (("delta", delta), ("half_delta", delta / 2)):
            v = check_quasi_conformal(self.space, self.q, self.phi, eta, H, d, probes,
                                      self.tau, records=self._triples)
            out[label] = v.to_dict()
        out["note"] = "limsup replaced by a sup over ambient probe pairs within delta"
        return out

    def _default_pairs(self, centers):
        if "comparability_pairs" in self.config:
            return [tuple(p) for p in self.config["comparability_pairs"]]
        pairs = []
        for y in centers:
            fib = self.q.fiber_points[int(y)]
            p = self.phi.point(int(y))
            if self.psi is not None:
                pairs.append((p, self.psi.point(int(y))))
            pairs += [(p, int(fib[0])), (p, int(fib[-1]))]
        return pairs

    def a_comparability(self):
        pairs = self._default_pairs(self.centers())
        res = comparability_constant(self.space, self.q, pairs, self.radii())
        out = res.to_dict()
        out["pairs"] = len(pairs)
        return out

    def a_ahlfors(self):
        rep = fit_regularity(self.space, self.q, self.phi, self.centers(), self.radii())
        self.csv["ahlfors"] = [["center", "r", "measure"]] + [list(s) for s in rep.samples]
        return rep.to_dict()

    def a_lemma(self):
        centers = self.centers()
        v = check_ball_inclusion(self.space, self.q, self.phi, self._ell, centers,
                                 self.radii(), self.tau)
        return v.to_dict()

    def a_chain(self):
        eta = self.eta(chain=True)
        v = check_theorem_chain(self.space, self.q, self.phi, self.psi, eta, self.radii(),
                                self.centers(), probe_points=self.probes(),
                                tolerance=float(self.config["chain_tau"]), slack=self.tau)
        out = v.to_dict()
        out["eta"] = eta.to_dict()
        return out

    def analysis(self, name: str) -> Callable[[], dict]:
        return getattr(self, "a_" + name.replace("-", "_"))


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _write(path: Path, text: str, written: list):
    if path.exists() and path.read_text() != text:
        raise InvariantBreach(f"{path} exists with different content for the same config")
    path.write_text(text)
    written.append(path.name)


def run(config: dict, out_dir: Path, quiet: bool = False) -> int:
    """Execute the analyses of ``config`` and write the bundle under ``out_dir``.

    Raises :class:`ConfigError` when the model cannot be built; otherwise
    returns the process exit status.
    """
    try:
        state = Run(config)
    except DomainError as exc:
        raise ConfigError(f"model: {exc}") from None
    digest = config_hash(config)
    run_dir = Path(out_dir) / digest
    run_dir.mkdir(parents=True, exist_ok=True)
    header = {"config": config, "version": __version__, "seed": config["seed"],
              "rng": RNG_ALGORITHM, "slack": config["tau"], "generation": state.generation}
    if state.ids is not None:
        header["ids"] = state.ids
    entries, written = [], []
    status = EXIT_OK
    failed: set[str] = set()
    for name in closure(config):
        if failed & _prerequisites(config, name):
            entries.append({"analysis": name, "status": "incomplete",
                            "error": "a prerequisite failed"})
            failed.add(name)
            continue
        try:
            result = state.analysis(name)()
            state.results[name] = result
            body = dict(header, analysis=name, result=result)
            _write(run_dir / f"{name}.json", dumps(body), written)
            if config["csv"] and name in state.csv:
                _write(run_dir / f"{name}.csv", _csv_text(state.csv.pop(name)), written)
        except InvariantBreach as exc:
            entries.append({"analysis": name, "status": "failed", "error": str(exc)})
            failed.add(name)
            status = EXIT_INTERNAL
            continue
        except DomainError as exc:
            entries.append({"analysis": name, "status": "failed", "error": str(exc)})
            failed.add(name)
            status = max(status, EXIT_PRECONDITION)
            continue
        entries.append({"analysis": name, "status": "ok"})
        if not quiet:
            print(f"{name}: {_summary(name, result)}")
    manifest = {"config_hash": digest, "version": __version__, "analyses": entries,
                "files": written, "exit_status": status,
                "created": datetime.now(timezone.utc).isoformat()}
    (run_dir / "manifest.json").write_text(dumps(manifest))
    if not quiet:
        print(f"reports written to {run_dir}")
    return status


def _prerequisites(config: dict, name: str) -> set:
    return set(closure(dict(config, analyses=[name]))) - {name}


def _summary(name: str, result: dict) -> str:
    picks = {"validate": "ok", "lipschitz": "L", "ell-eta": "ell_eta", "ahlfors": "Q",
             "comparability": "C", "lemma": "pass", "chain": "pass", "triples": "count"}
    key = picks.get(name)
    if key is not None and key in result:
        return f"{key}={result[key]}"
    return "done"


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="sections", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the analyses selected in a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config.read_text())
        return run(config, args.out, quiet=args.quiet)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
