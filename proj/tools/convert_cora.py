#!/usr/bin/env python3
"""One-shot converter: LINQS Cora (cora.content / cora.cites) -> dataset directory.

Writes meta.json, edges.csv, features.csv and labels.csv in the layout that
`fedtad partition|analyze|run` read. Class ids follow the sorted class names;
node ids follow the order of cora.content.

A copy of the LINQS files ships inside the `pgl` wheel on PyPI
(pgl/data/cora/), which is how data/cora was produced:

    pip download --no-deps pgl
    python3 -c "import zipfile; zipfile.ZipFile('pgl-....whl').extractall('pgl_x')"
    tools/convert_cora.py pgl_x/pgl/data/cora data/cora
"""
import argparse
import json
import pathlib


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=pathlib.Path, help="directory with cora.content and cora.cites")
    ap.add_argument("dst", type=pathlib.Path, help="output dataset directory")
    args = ap.parse_args()

    rows = [line.split() for line in (args.src / "cora.content").read_text().splitlines() if line.strip()]
    classes = sorted({r[-1] for r in rows})
    class_id = {c: i for i, c in enumerate(classes)}
    node_id = {r[0]: i for i, r in enumerate(rows)}
    feature_dim = len(rows[0]) - 2

    edges = set()
    for line in (args.src / "cora.cites").read_text().splitlines():
        if not line.strip():
            continue
        a, b = line.split()
        if a not in node_id or b not in node_id:
            continue
        u, v = node_id[a], node_id[b]
        if u == v:
            continue
        edges.add((min(u, v), max(u, v)))

    args.dst.mkdir(parents=True, exist_ok=True)
    meta = {"num_nodes": len(rows), "num_classes": len(classes), "feature_dim": feature_dim, "name": "cora"}
    (args.dst / "meta.json").write_text(json.dumps(meta) + "\n")
    (args.dst / "edges.csv").write_text("".join(f"{u},{v}\n" for u, v in sorted(edges)))
    (args.dst / "features.csv").write_text("".join(",".join(r[1:-1]) + "\n" for r in rows))
    (args.dst / "labels.csv").write_text("".join(f"{class_id[r[-1]]}\n" for r in rows))
    print(f"{meta['num_nodes']} nodes, {len(edges)} undirected edges, {feature_dim} features, {len(classes)} classes")


if __name__ == "__main__":
    main()
