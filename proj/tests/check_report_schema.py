#!/usr/bin/env python3
"""Runs the CLI end to end and validates every emitted document.

usage: check_report_schema.py <mldiag> <schema.json> <work-dir>

Besides the schema, each hypothesis is checked against its own evidence:
cf recomputed from (z, trend) and combined_cf re-folded in recorded order.
"""

import json
import math
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def run(cli, *args, expect=(0,)):
    proc = subprocess.run([cli, *args], capture_output=True, text=True)
    if proc.returncode not in expect:
        sys.exit(f"{' '.join(args)}: exit {proc.returncode}\n{proc.stderr}")
    return proc


def relational_cf(z, trend):
    w, k, c = trend["weight"], trend["slope"], trend["cutoff"]
    g = lambda u: math.tanh(u / 2.0)  # 2*sigmoid(u) - 1
    d = trend["direction"]
    if d == "increasing":
        return w * g(k * (z - c))
    if d == "decreasing":
        return w * g(k * (-z - c))
    if d == "either":
        return w * g(k * (abs(z) - c))
    return -w * g(k * (abs(z) - c))


def combine(a, b):
    if (a == 1 and b == -1) or (a == -1 and b == 1):
        return 0.0
    if a >= 0 and b >= 0:
        return a + b - a * b
    if a <= 0 and b <= 0:
        return a + b + a * b
    return (a + b) / (1 - min(abs(a), abs(b)))


def check_evidence(doc, name):
    for h in doc.get("hypotheses", []):
        acc = 0.0
        for e in h["evidence"]:
            expected = 0.0 if e["z"] is None else relational_cf(e["z"], e["trend"])
            if abs(expected - e["cf"]) > 1e-12:
                sys.exit(f"{name}: {h['hypothesis']} evidence cf {e['cf']} != {expected}")
            acc = combine(acc, e["cf"])
        if abs(acc - h["combined_cf"]) > 1e-12:
            sys.exit(f"{name}: {h['hypothesis']} combined_cf {h['combined_cf']} != refold {acc}")
    ranks = [h["rank"] for h in doc.get("hypotheses", [])]
    if ranks != list(range(1, len(ranks) + 1)):
        sys.exit(f"{name}: hypothesis ranks are not 1..n")


def main():
    cli, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    data_dir = schema_path.parent
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    validator = jsonschema.Draft202012Validator(json.loads(schema_path.read_text()))

    (work / "spec.json").write_text('{"n_slats": 8}')
    run(cli, "--seed", "3", "generate", "--out-dir", str(work / "gen"), "--spec", str(work / "spec.json"),
        "--fault", "cable.002/attenuation", "--magnitude", "6")
    gen = work / "gen"
    batches = sorted(str(p) for p in gen.glob("baseline-*.csv"))
    run(cli, "--out", str(work / "baseline.json"), "baseline", str(gen / "model.json"), *batches)

    docs = {}
    for kind in ("monitor", "diagnose"):
        proc = run(cli, "--alpha", "1e-4", "--timestamp", "2000-01-01T00:00:00Z", kind, str(gen / "model.json"),
                   str(work / "baseline.json"), str(gen / "sweep.csv"), expect=(1,))
        docs[kind] = json.loads(proc.stdout)
    healthy = run(cli, "--alpha", "1e-4", "diagnose", str(gen / "model.json"), str(work / "baseline.json"),
                  batches[0], expect=(0, 1))
    docs["diagnose-replay"] = json.loads(healthy.stdout)

    run(cli, "simulate", str(data_dir / "campaigns" / "demo.json"), "--out-dir", str(work / "sim"))
    for p in sorted((work / "sim").glob("*.json")):
        docs[p.name] = json.loads(p.read_text())

    for name, doc in docs.items():
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        if errors:
            sys.exit(f"{name}: {errors[0].message} at {list(errors[0].path)}")
        check_evidence(doc, name)

    top = docs["diagnose"]["hypotheses"][0]
    if top["failure_type"] != "attenuation":
        sys.exit(f"diagnose: top hypothesis {top['hypothesis']}, expected an attenuation")
    print(f"{len(docs)} documents valid")


if __name__ == "__main__":
    main()
