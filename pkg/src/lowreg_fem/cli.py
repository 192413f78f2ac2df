"""Command line entry point ``lowreg-fem``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .fields import list_fields
from .mesh import DOMAIN_BUILDERS, build_mesh
from .study import StudyConfig, run_study

log = logging.getLogger("lowreg_fem")


def _parser():
    p = argparse.ArgumentParser(prog="lowreg-fem",
                                description="Nedelec / RT interpolation and curl-curl studies")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a convergence study from a JSON config")
    run.add_argument("--config", required=True, help="path to the JSON study config")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--threads", type=int, help="kernel threads (overrides threads)")
    run.add_argument("--check", action="store_true",
                     help="exit with status 2 when an 'expect' threshold is violated")
    run.add_argument("-q", "--quiet", action="store_true")
    sub.add_parser("list-fields", help="list the field catalog")
    sub.add_parser("list-domains", help="list the mesh domains")
    return p


def _run(args):
    with open(args.config) as fh:
        data = json.load(fh)
    if args.out:
        data["output_dir"] = args.out
    if args.threads:
        data["threads"] = args.threads
    cfg = StudyConfig.from_dict(data)
    out = cfg.output_dir or "."

    def progress(lv):
        log.info("level %d: cells=%d h=%.4g err_l2=%.6e eoc=%s (%.1fs)", lv.level, lv.n_cells,
                 lv.h_max, lv.err_l2, lv.eoc, lv.wall_seconds)

    report = run_study(cfg, progress=progress)
    report.write(out)
    sys.stdout.write(report.csv_text())
    if args.check:
        problems = report.check()
        for msg in problems:
            log.error("check failed: %s", msg)
        if problems:
            return 2
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "list-fields":
            for name, desc in list_fields().items():
                print(f"{name:22s} {desc}")
            return 0
        if args.command == "list-domains":
            for name in DOMAIN_BUILDERS:
                dom = build_mesh(name, 1).domain
                print(f"{name:10s} dim={dom.dim} volume={dom.volume:g} diameter={dom.diameter:.6g}")
            return 0
        return _run(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
