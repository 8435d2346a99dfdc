"""Batch front-end: build, verify, audit, and export every artifact.

Every subcommand writes a machine-readable JSON report (schema 1) with the
parameters used, derived quantities, audit maxima (exact rationals as
"p/q" strings where the underlying audit is exact), retry counts, and wall
time.  The exit status is a pure function of the audit outcomes: 0 when
every audit passed, 1 on an audit failure (the report, with witnesses, is
still written), 2 on an invalid configuration, 3 when a resource cap is
exceeded.

Rationals on the command line are "p/q" strings (decimals also accepted),
so exact epsilons plumb through to the exact classical audits.  The seed
defaults to DEFAULT_SEED so plain invocations are reproducible; the
EQCOMM_THREADS environment variable caps worker counts in the parallel
overlap computations.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, fields
from fractions import Fraction

import numpy as np

from . import gf2codes, protocols_classical, protocols_quantum, ranks
from .util import CapExceeded, RetryBudgetExceeded

SCHEMA_VERSION = 1
DEFAULT_SEED = 1729

EXIT_PASS = 0
EXIT_AUDIT_FAIL = 1
EXIT_INVALID = 2
EXIT_CAP = 3


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation: command, sizes, exact rationals, seed, and output.

    epsilon (where present) must be a rational in (0, 1/2); seed defaults
    to DEFAULT_SEED so bare invocations are reproducible.
    """

    command: str
    n: int | None = None
    m: int | None = None
    epsilon: Fraction | None = None
    delta: Fraction | None = None
    seed: int = DEFAULT_SEED
    mode: str = "exhaustive"
    output: str | None = None
    artifact: str | None = None
    format: str = "json"
    kind: str | None = None
    what: str | None = None
    retries: int = gf2codes.DEFAULT_RETRIES

    def __post_init__(self):
        if self.epsilon is not None and not 0 < self.epsilon < Fraction(1, 2):
            raise ValueError(f"epsilon must be in (0, 1/2), got {self.epsilon}")
        if self.mode not in ("exhaustive", "sampled"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.format not in ("json", "csv"):
            raise ValueError(f"unknown format {self.format!r}")

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in vars(args).items() if k in names and v is not None}
        return cls(**values)


def _frac(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from exc


def _json_value(value):
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _jsonable(obj):
    if isinstance(obj, dict):
        return {key: _jsonable(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(val) for val in obj]
    return _json_value(obj)


def _cmd_gen_code(cfg: RunConfig):
    built = gf2codes.make_equality_code(cfg.n, cfg.epsilon, cfg.seed, cfg.retries)
    if cfg.artifact:
        gf2codes.save_code(built.code, cfg.artifact)
    report = {
        "derived": {"N": built.code.N, "delta_sq": built.report.delta_sq},
        "audit": {
            "band_passed": built.report.passed,
            "min_rel": built.report.min_rel,
            "max_rel": built.report.max_rel,
            "checked": built.report.checked,
        },
        "retries": {"attempts": built.attempts},
        "formulas": {"N": "ceil(16*n/epsilon)", "delta_sq": "epsilon/4"},
    }
    return report, built.report.passed


def _cmd_verify_code(cfg: RunConfig):
    N, delta_sq = gf2codes.equality_code_params(cfg.n, cfg.epsilon)
    if cfg.delta is not None:
        delta_sq = cfg.delta**2
    code = gf2codes.sample_generator(cfg.n, N, cfg.seed)
    band = gf2codes.verify_distance_band(code, delta_sq, mode=cfg.mode)
    report = {
        "derived": {"N": N, "delta_sq": delta_sq},
        "audit": {
            "band_passed": band.passed,
            "min_rel": band.min_rel,
            "max_rel": band.max_rel,
            "witness": band.witness,
            "mode": band.mode,
            "checked": band.checked,
            "miss_probability_bound": band.miss_probability_bound,
        },
        "formulas": {"band": "q*(2w-N)^2 <= 4*p*N^2 for delta_sq=p/q"},
    }
    return report, band.passed


def _cmd_classical_eq(cfg: RunConfig):
    proto = protocols_classical.compose_eq(cfg.n, cfg.epsilon, cfg.seed, mode=cfg.mode)
    audit = protocols_classical.audit_error(proto) if cfg.mode == "exhaustive" else None
    if cfg.artifact:
        protocols_classical.save_protocol(proto, cfg.artifact)
    passed = proto.verified and (audit is None or audit.max_error < cfg.epsilon)
    report = {
        "derived": {
            "k": proto.k,
            "epsilon0": proto.epsilon0,
            "delta": proto.delta,
            "B": proto.B,
            "cost_bits": proto.cost,
            "pre_ceiling_cost_bits": proto.pre_ceiling_cost,
            "verified": proto.verified,
        },
        "audit": {
            "max_error": None if audit is None else audit.max_error,
            "argmax_pair": None if audit is None else list(audit.argmax),
            "error_bound": proto.error_bound,
        },
        "retries": {"attempts": proto.attempts},
        "formulas": {
            "k": "ceil(log2(8/epsilon))",
            "epsilon0": "2^-k",
            "delta": "epsilon/epsilon0 - 1",
            "B": "ceil(6*n/(delta^2*epsilon0))",
            "cost_bits": "ceil(log2(B)) + k + 1",
        },
    }
    return report, passed


def _cmd_quantum_pure(cfg: RunConfig):
    family = protocols_quantum.build_pure_protocol(cfg.n, cfg.epsilon, cfg.seed)
    worst, pair = protocols_quantum.max_pure_acceptance(family)
    if cfg.artifact:
        if cfg.format == "csv":
            protocols_quantum.write_acceptance_csv(
                protocols_quantum.pure_acceptance_matrix(family), cfg.artifact
            )
        else:
            protocols_quantum.save_pure_family(family, cfg.artifact)
    passed = family.band.passed and worst <= cfg.epsilon
    report = {
        "derived": {
            "N": family.N,
            "qubits": family.qubits,
            "log2_N": math.log2(family.N),
        },
        "audit": {
            "max_offdiag_acceptance": worst,
            "argmax_pair": list(pair),
            "band_passed": family.band.passed,
            "min_rel": family.band.min_rel,
            "max_rel": family.band.max_rel,
        },
        "retries": {"attempts": family.attempts},
        "formulas": {"N": "ceil(16*n/epsilon)", "qubits": "ceil(log2(N))"},
    }
    return report, passed


def _cmd_quantum_mixed(cfg: RunConfig):
    family = protocols_quantum.build_mixed_protocol(cfg.n, cfg.epsilon, cfg.seed)
    worst, pair = protocols_quantum.max_mixed_overlap(family)
    if cfg.artifact:
        if cfg.format == "csv":
            protocols_quantum.write_acceptance_csv(
                protocols_quantum.mixed_acceptance_matrix(family), cfg.artifact
            )
        else:
            protocols_quantum.save_mixed_family(family, cfg.artifact)
    threshold = float(cfg.epsilon) * family.r
    report = {
        "derived": {
            "r": family.r,
            "d": family.d,
            "qubits": family.qubits,
            "log2_d": math.log2(family.d),
            "verified": family.verified,
        },
        "audit": {
            "max_pair_overlap": worst,
            "argmax_pair": list(pair),
            "overlap_threshold": threshold,
            "max_offdiag_acceptance": worst / family.r,
        },
        "retries": {"resamples": family.resamples},
        "formulas": {"r": "ceil(sqrt(10*n))", "d": "ceil(2*r/epsilon)"},
    }
    return report, family.verified


def _cmd_extract_psd(cfg: RunConfig):
    pure = protocols_quantum.build_pure_protocol(cfg.n, cfg.epsilon, cfg.seed)
    pure_fact = protocols_quantum.extract_psd(*protocols_quantum.pure_psd_inputs(pure))
    pure_dev = float(
        np.abs(pure_fact.reconstruction()
               - protocols_quantum.pure_acceptance_matrix(pure, materialized=True)).max()
    )
    mixed = protocols_quantum.build_mixed_protocol(cfg.n, cfg.epsilon, cfg.seed)
    mixed_fact = protocols_quantum.extract_psd(*protocols_quantum.mixed_psd_inputs(mixed))
    mixed_dev = float(
        np.abs(mixed_fact.reconstruction()
               - protocols_quantum.mixed_acceptance_matrix(mixed)).max()
    )
    passed = pure_dev <= 1e-9 and mixed_dev <= 1e-9
    report = {
        "derived": {"pure_dim": pure_fact.dim, "mixed_dim": mixed_fact.dim},
        "audit": {
            "pure_reconstruction_max_dev": pure_dev,
            "mixed_reconstruction_max_dev": mixed_dev,
            "tolerance": 1e-9,
        },
        "formulas": {"entry": "tr(A_x B_y)"},
    }
    return report, passed


def _cmd_certify_lb(cfg: RunConfig):
    family = protocols_quantum.build_pure_protocol(cfg.n, cfg.epsilon, cfg.seed)
    states = family.states_map()
    cert = protocols_quantum.certify_lower_bound(states, states, float(cfg.epsilon))
    diag_dev = float(np.abs(np.diagonal(cert.gram) - 1.0).max())
    bound = 2 * math.sqrt(float(cfg.epsilon))
    passed = (
        cert.band_ok
        and cert.offdiag_max <= bound + 1e-9
        and diag_dev <= 1e-9
        and cert.numeric_rank_of_gram <= 2 * cert.d
    )
    report = {
        "derived": {"d": cert.d, "gram_size": cert.gram.shape[0]},
        "audit": {
            "band_ok": cert.band_ok,
            "band_min": cert.band_min,
            "band_max": cert.band_max,
            "offdiag_max": cert.offdiag_max,
            "offdiag_bound": bound,
            "gram_diag_max_dev": diag_dev,
            "numeric_rank_of_gram": cert.numeric_rank_of_gram,
            "rank_bound": 2 * cert.d,
        },
        "formulas": {"offdiag_bound": "2*sqrt(epsilon)", "rank_bound": "2*d"},
    }
    return report, passed


def _cmd_identity_nonneg(cfg: RunConfig):
    fact, audit = ranks.identity_nonneg(cfg.n, cfg.epsilon, cfg.seed)
    if cfg.artifact:
        ranks.save_nonneg(fact, cfg.artifact,
                          meta={"n": cfg.n, "epsilon": str(cfg.epsilon), "seed": cfg.seed})
    dim_bound = Fraction(32 * cfg.n) / cfg.epsilon**2
    passed = audit.passed and fact.inner_dim <= dim_bound
    report = {
        "derived": {"inner_dim": fact.inner_dim, "inner_dim_bound": dim_bound},
        "audit": {
            "max_abs_error": audit.max_abs_error,
            "worst_pair": list(audit.worst),
            "passed": audit.passed,
            "exact": audit.exact,
        },
        "formulas": {"inner_dim": "B*2^k", "inner_dim_bound": "32*n/epsilon^2"},
    }
    return report, passed


def _cmd_identity_psd(cfg: RunConfig):
    fact, audit = ranks.identity_psd(cfg.n, cfg.epsilon, cfg.seed)
    if cfg.artifact:
        ranks.save_psd(fact, cfg.artifact,
                       meta={"n": cfg.n, "epsilon": str(cfg.epsilon), "seed": cfg.seed})
    dim_bound = 8 * math.sqrt(cfg.n) / float(cfg.epsilon)
    passed = audit.passed and fact.dim <= dim_bound
    report = {
        "derived": {"dim": fact.dim, "dim_bound": dim_bound},
        "audit": {
            "max_abs_error": audit.max_abs_error,
            "worst_pair": list(audit.worst),
            "passed": audit.passed,
            "exact": audit.exact,
        },
        "formulas": {"dim": "ceil(2*ceil(sqrt(10*n))/epsilon)", "dim_bound": "8*sqrt(n)/epsilon"},
    }
    return report, passed


def _cmd_sink_xor(cfg: RunConfig):
    if cfg.what == "matrix":
        target = ranks.sink_xor_matrix(cfg.m)
        if cfg.artifact:
            if cfg.format == "csv":
                with open(cfg.artifact, "w") as fh:
                    for row in target.entries:
                        fh.write(",".join(str(int(v)) for v in row) + "\n")
            else:
                with open(cfg.artifact, "w") as fh:
                    json.dump(target.entries.tolist(), fh)
                    fh.write("\n")
        ones = target.entries.sum(axis=1)
        uniform = bool((ones == ones[0]).all())
        report = {
            "derived": {
                "n": target.n,
                "size": int(target.entries.shape[0]),
                "ones_per_row": int(ones[0]),
            },
            "audit": {"rows_uniform": uniform},
            "formulas": {"entry": "SINK(x xor y)"},
        }
        return report, uniform
    if cfg.what == "nonneg":
        fact, audit = ranks.sink_xor_nonneg(cfg.m, cfg.seed)
        if cfg.artifact:
            ranks.save_nonneg(fact, cfg.artifact, meta={"m": cfg.m, "seed": cfg.seed})
        report = {
            "derived": {
                "inner_dim": fact.inner_dim,
                "per_vertex_dims": list(fact.block_dims),
            },
            "audit": {
                "epsilon": audit.epsilon,
                "max_abs_error": audit.max_abs_error,
                "worst_pair": list(audit.worst),
                "exact": audit.exact,
            },
            "formulas": {"per_term_epsilon": "1/(3*m)", "inner_dim": "sum of per-vertex dims"},
        }
        return report, audit.passed
    fact, audit = ranks.sink_xor_psd(cfg.m, cfg.seed)
    if cfg.artifact:
        ranks.save_psd(fact, cfg.artifact, meta={"m": cfg.m, "seed": cfg.seed})
    report = {
        "derived": {"dim": fact.dim},
        "audit": {
            "epsilon": audit.epsilon,
            "max_abs_error": audit.max_abs_error,
            "worst_pair": list(audit.worst),
            "exact": audit.exact,
        },
        "formulas": {"per_term_epsilon": "1/(3*m)", "dim": "sum of per-vertex dims"},
    }
    return report, audit.passed


def _cmd_verify_approx(cfg: RunConfig):
    epsilon = cfg.epsilon
    if cfg.kind.startswith("identity") and cfg.n is None:
        raise ValueError(f"--n is required for kind {cfg.kind}")
    if cfg.kind.startswith("sink") and cfg.m is None:
        raise ValueError(f"--m is required for kind {cfg.kind}")
    if cfg.kind == "identity-nonneg":
        fact, _ = ranks.identity_nonneg(cfg.n, epsilon, cfg.seed)
        target = ranks.identity_target(cfg.n)
    elif cfg.kind == "identity-psd":
        fact, _ = ranks.identity_psd(cfg.n, epsilon, cfg.seed)
        target = ranks.identity_target(cfg.n)
    elif cfg.kind == "sink-nonneg":
        fact, _ = ranks.sink_xor_nonneg(cfg.m, cfg.seed)
        target = ranks.sink_xor_matrix(cfg.m)
        epsilon = Fraction(1, 3)
    else:
        fact, _ = ranks.sink_xor_psd(cfg.m, cfg.seed)
        target = ranks.sink_xor_matrix(cfg.m)
        epsilon = Fraction(1, 3)
    audit = ranks.verify_entrywise(fact, target, epsilon)
    report = {
        "derived": {"dim": audit.dim, "target": target.label},
        "audit": {
            "epsilon": audit.epsilon,
            "max_abs_error": audit.max_abs_error,
            "worst_pair": list(audit.worst),
            "exact": audit.exact,
        },
        "formulas": {"pass": "max|reconstruction - target| <= epsilon"},
    }
    return report, audit.passed


_HANDLERS = {
    "gen-code": _cmd_gen_code,
    "verify-code": _cmd_verify_code,
    "classical-eq": _cmd_classical_eq,
    "quantum-pure": _cmd_quantum_pure,
    "quantum-mixed": _cmd_quantum_mixed,
    "extract-psd": _cmd_extract_psd,
    "certify-lb": _cmd_certify_lb,
    "identity-nonneg": _cmd_identity_nonneg,
    "identity-psd": _cmd_identity_psd,
    "sink-xor": _cmd_sink_xor,
    "verify-approx": _cmd_verify_approx,
}


def _add_common(sub, n_or_m: str = "n", epsilon: bool = True):
    if n_or_m == "n":
        sub.add_argument("--n", type=int, required=True, help="input length in bits")
    else:
        sub.add_argument("--m", type=int, required=True, help="number of graph vertices")
    if epsilon:
        sub.add_argument("--epsilon", type=_frac, required=True,
                         help="error bound as an exact rational, e.g. 1/4")
    sub.add_argument("--seed", type=int, default=DEFAULT_SEED,
                     help=f"RNG seed (default {DEFAULT_SEED})")
    sub.add_argument("--output", help="report path (default: stdout)")
    sub.add_argument("--artifact", help="artifact path or base path")
    sub.add_argument("--format", choices=["json", "csv"], default="json",
                     help="artifact format where applicable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqcomm",
        description="Construct and exhaustively audit Equality protocols and factorizations",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gen-code", help="sample and certify a distance-band code")
    _add_common(sub)
    sub.add_argument("--retries", type=int, default=gf2codes.DEFAULT_RETRIES)

    sub = subs.add_parser("verify-code", help="re-sample a code from seed and check its band")
    _add_common(sub)
    sub.add_argument("--delta", type=_frac, default=None,
                     help="band half-width override as a rational")
    sub.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")

    sub = subs.add_parser("classical-eq", help="verified private-coin Equality protocol")
    _add_common(sub)
    sub.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")

    for name, helptext in [
        ("quantum-pure", "fingerprint protocol over a certified code"),
        ("quantum-mixed", "projector-family protocol"),
        ("extract-psd", "psd factorizations of both protocols' acceptance matrices"),
        ("certify-lb", "realified Gram certificate of the pure protocol"),
        ("identity-nonneg", "nonnegative factorization of the Identity"),
        ("identity-psd", "psd factorization of the Identity"),
    ]:
        sub = subs.add_parser(name, help=helptext)
        _add_common(sub)

    sub = subs.add_parser("sink-xor", help="SINK-of-XOR matrix and factorizations")
    sub.add_argument("what", choices=["matrix", "nonneg", "psd"])
    _add_common(sub, n_or_m="m", epsilon=False)

    sub = subs.add_parser("verify-approx", help="re-verify a factorization entrywise")
    sub.add_argument("--kind", required=True,
                     choices=["identity-nonneg", "identity-psd", "sink-nonneg", "sink-psd"])
    sub.add_argument("--n", type=int, default=None)
    sub.add_argument("--m", type=int, default=None)
    sub.add_argument("--epsilon", type=_frac, default=Fraction(1, 4))
    sub.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sub.add_argument("--output", help="report path (default: stdout)")
    sub.add_argument("--artifact", help="unused for this command")
    sub.add_argument("--format", choices=["json", "csv"], default="json")

    return parser


def _emit(report: dict, output) -> None:
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(config: RunConfig) -> int:
    """Dispatch one configured command, write its report, return exit status."""
    handler = _HANDLERS[config.command]
    report = {
        "schema": SCHEMA_VERSION,
        "command": config.command,
        "parameters": {
            key: _json_value(getattr(config, key))
            for key in ("n", "m", "epsilon", "delta", "seed", "mode", "kind", "what")
            if getattr(config, key, None) is not None
        },
    }
    started = time.perf_counter()
    try:
        body, passed = handler(config)
    except CapExceeded as exc:
        report["error"] = {"type": "resource-cap", "message": str(exc)}
        report["wall_time_s"] = time.perf_counter() - started
        _emit(report, config.output)
        return EXIT_CAP
    except RetryBudgetExceeded as exc:
        report["error"] = {"type": "retry-budget", "message": str(exc)}
        report["wall_time_s"] = time.perf_counter() - started
        _emit(report, config.output)
        return EXIT_AUDIT_FAIL
    except protocols_quantum.ProtocolPreconditionError as exc:
        report["error"] = {
            "type": "protocol-precondition",
            "kind": exc.kind,
            "witness_pair": list(exc.pair),
            "acceptance": exc.value,
        }
        report["wall_time_s"] = time.perf_counter() - started
        _emit(report, config.output)
        return EXIT_AUDIT_FAIL
    report.update(body)
    report["passed"] = bool(passed)
    report["wall_time_s"] = time.perf_counter() - started
    _emit(report, config.output)
    return EXIT_PASS if passed else EXIT_AUDIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.from_namespace(args)
        return run(config)
    except ValueError as exc:
        sys.stderr.write(f"invalid configuration: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
