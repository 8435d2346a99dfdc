#!/usr/bin/env python3
"""Build and audit every artifact at reference parameters into out/.

Runs the CLI commands over a standard grid with the default seed; each
command leaves a JSON report (and artifact files where applicable).  The
script exits nonzero if any audit fails.
"""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from eqcomm.cli import main  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "out"

JOBS = [
    ["gen-code", "--n", "8", "--epsilon", "4/25", "--artifact", "code-n8.gf2c"],
    ["verify-code", "--n", "8", "--epsilon", "4/25"],
    ["classical-eq", "--n", "8", "--epsilon", "1/4", "--artifact", "eq-n8.proto"],
    ["classical-eq", "--n", "10", "--epsilon", "1/16"],
    ["quantum-pure", "--n", "8", "--epsilon", "4/25", "--artifact", "pure-n8"],
    ["quantum-mixed", "--n", "6", "--epsilon", "1/4", "--artifact", "mixed-n6"],
    ["extract-psd", "--n", "4", "--epsilon", "1/4"],
    ["certify-lb", "--n", "6", "--epsilon", "1/25"],
    ["identity-nonneg", "--n", "6", "--epsilon", "1/4", "--artifact", "id-n6.nnf"],
    ["identity-psd", "--n", "4", "--epsilon", "1/4", "--artifact", "idpsd-n4"],
    ["sink-xor", "matrix", "--m", "3", "--format", "csv", "--artifact", "sink-m3.csv"],
    ["sink-xor", "nonneg", "--m", "3", "--artifact", "sink-m3.nnf"],
    ["sink-xor", "psd", "--m", "3", "--artifact", "sinkpsd-m3"],
    ["verify-approx", "--kind", "identity-nonneg", "--n", "6", "--epsilon", "1/4"],
]


def run() -> int:
    OUT.mkdir(exist_ok=True)
    worst = 0
    for index, job in enumerate(JOBS):
        name = f"{index:02d}-{job[0]}"
        argv = list(job)
        if "--artifact" in argv:
            at = argv.index("--artifact") + 1
            argv[at] = str(OUT / argv[at])
        argv += ["--output", str(OUT / f"{name}.report.json")]
        code = main(argv)
        print(f"{'ok' if code == 0 else f'exit {code}'}  {' '.join(job)}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run())
