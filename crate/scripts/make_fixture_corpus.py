#!/usr/bin/env python3
"""Writes a deterministic synthetic collection directory for tests.

Layout matches `plancost collect` output: manifest.tsv, queries/, plans/.
Runtimes are driven by plan cost and cardinality so models have signal.

    python3 scripts/make_fixture_corpus.py crates/core/tests/fixtures/corpus
"""

import hashlib
import json
import math
import random
import sys
from pathlib import Path

TEMPLATES = 22
PER_TEMPLATE = 3
SEED = 20240611
COLLECTED_AT = "2024-06-11T12:00:00.000000Z"
SERVER = "PostgreSQL 16.2"

TABLES = {
    "lineitem": (6001215, 16),
    "orders": (1500000, 12),
    "customer": (150000, 10),
    "part": (200000, 12),
    "partsupp": (800000, 14),
    "supplier": (10000, 8),
    "nation": (25, 6),
    "region": (5, 4),
}
NAMES = sorted(TABLES)


def query_id(sql):
    return hashlib.sha256(" ".join(sql.split()).encode()).digest()[:8].hex()


def node(ntype, sc, tc, rows, width, st, tt, arows, loops=1, children=None, **extra):
    n = {
        "Node Type": ntype,
        "Parallel Aware": False,
        "Startup Cost": round(sc, 2),
        "Total Cost": round(tc, 2),
        "Plan Rows": int(rows),
        "Plan Width": int(width),
        "Actual Startup Time": round(st, 3),
        "Actual Total Time": round(tt, 3),
        "Actual Rows": int(arows),
        "Actual Loops": loops,
    }
    n.update(extra)
    if children:
        n["Plans"] = children
    return n


def scan(rng, table, selectivity, ms_per_row):
    total, width = TABLES[table]
    kept = max(1, int(total * selectivity))
    est = max(1, int(kept * rng.uniform(0.5, 2.0)))
    cost = total * 0.023 + 0.01 * total * rng.uniform(0.9, 1.1)
    time = max(0.01, total * ms_per_row * rng.uniform(0.9, 1.1))
    extra = {"Relation Name": table, "Alias": table}
    if kept < total:
        extra["Filter"] = f"({table[0]}_key < {kept})"
        extra["Rows Removed by Filter"] = total - kept
    return node("Seq Scan", 0.0, cost, est, width, min(0.05, time), time, kept, **extra), kept, cost, time


def plan_for(rng, template, scale):
    ms_per_row = 0.00006
    kind = template % 4
    t1 = NAMES[template % len(NAMES)]
    t2 = NAMES[(template * 3 + 1) % len(NAMES)]
    sel = min(1.0, 0.05 + 0.3 * scale)
    s1, r1, c1, m1 = scan(rng, t1, sel, ms_per_row)
    if kind == 0:
        cost = c1 + r1 * 0.02
        time = m1 + r1 * 0.00002
        root = node("Aggregate", cost, cost + 1, 1, 8, time, time + 0.02, 1, children=[s1], Strategy="Plain")
    elif kind == 1:
        s2, r2, c2, m2 = scan(rng, t2, 1.0, ms_per_row)
        hash_time = m2 + r2 * 0.00003
        h = node("Hash", c2, c2, r2, 8, hash_time, hash_time, r2, children=[s2])
        h["Parent Relationship"] = "Inner"
        out = max(1, min(r1, r2) // 2)
        cost = c1 + c2 + (r1 + r2) * 0.01
        time = m1 + hash_time + r1 * 0.00004
        root = node("Hash Join", c2, cost, out * rng.uniform(0.3, 3), 16, hash_time, time, out, children=[s1, h])
    elif kind == 2:
        sort_cost = c1 + r1 * math.log2(r1 + 2) * 0.002
        sort_time = m1 + r1 * math.log2(r1 + 2) * 0.000004
        sort = node("Sort", sort_cost, sort_cost + r1 * 0.001, r1, 16, sort_time, sort_time + 0.5, r1, children=[s1])
        root = node("Limit", sort_cost, sort_cost + 1, 10, 16, sort_time, sort_time + 0.6, 10, children=[sort])
    else:
        inner = node(
            "Index Scan", 0.42, 8.44, 1, 8, 0.004, 0.006, 1, loops=r1,
            **{"Relation Name": t2, "Index Name": f"{t2}_pkey", "Parent Relationship": "Inner"},
        )
        cost = c1 + r1 * 8.44
        time = m1 + r1 * 0.006
        loop = node("Nested Loop", 0.42, cost, r1, 24, 0.1, time, r1, children=[s1, inner])
        root = node("Aggregate", cost, cost + r1 * 0.01, 1, 8, time + r1 * 0.00001, time + r1 * 0.00001 + 0.1, 1, children=[loop])
    return root


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/corpus")
    (out / "queries").mkdir(parents=True, exist_ok=True)
    (out / "plans").mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    header = "query_id\ttemplate_id\tsql_path\tplan_path\texecution_time_ms\tstatus\terror\tcollected_at\tserver_version"
    lines = [header]
    for template in range(1, TEMPLATES + 1):
        for k in range(PER_TEMPLATE):
            scale = rng.uniform(0.0, 1.0)
            t1 = NAMES[template % len(NAMES)]
            sql = (
                f"select count(*) from {t1} "
                f"where {t1[0]}_key < {int(scale * 1000) + k} -- template {template}"
            )
            qid = query_id(sql)
            root = plan_for(rng, template, scale)
            exec_ms = round(root["Actual Total Time"] * rng.uniform(1.0, 1.05) + 0.1, 3)
            doc = [{
                "Plan": root,
                "Planning Time": round(rng.uniform(0.1, 2.0), 3),
                "Triggers": [],
                "Execution Time": exec_ms,
            }]
            (out / "queries" / f"{qid}.sql").write_text(sql + ";\n")
            (out / "plans" / f"{qid}.json").write_text(json.dumps(doc, indent=2) + "\n")
            lines.append("\t".join([
                qid, str(template), f"queries/{qid}.sql", f"plans/{qid}.json",
                repr(exec_ms), "ok", "", COLLECTED_AT, SERVER,
            ]))
    (out / "manifest.tsv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
