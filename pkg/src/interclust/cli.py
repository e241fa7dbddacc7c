"""Command-line entry points: experiment runs, synthetic data, HTTP service.

Exit codes: 0 success, 2 configuration error, 3 infeasible constraints.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .assignment import ContradictionError, InfeasibleError
from .harness import ConfigError, load_config, run_curves, run_grid, run_once, write_reports
from .synth import SyntheticSpec, generate_synthetic


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cluster",
        description="Constrained latent max-margin clustering experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, help="path to the experiment config")
    run.add_argument("--out", default="out", help="directory for reports")
    run.add_argument("--mode", choices=("grid", "curves", "once"), default="curves")

    synth = sub.add_parser("synth", help="generate a synthetic trajectory file")
    synth.add_argument("--spec", required=True, help="path to a SyntheticSpec JSON")
    synth.add_argument("--out", required=True, help="output trajectory file")

    serve = sub.add_parser("serve", help="start the interactive HTTP service")
    serve.add_argument("--config", required=True, help="default session config")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument(
        "--ui", default=None,
        help="directory with the built browser UI (defaults to ./frontend if present)",
    )
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.mode == "grid":
        payload = run_grid(config)
    elif args.mode == "curves":
        payload = run_curves(config)
    else:
        payload = run_once(config)
    for path in write_reports(args.out, args.mode, payload):
        print(path)
    return 0


def _cmd_synth(args) -> int:
    try:
        with open(args.spec) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read synthetic spec: {exc}") from exc
    from .harness import _parse_synthetic

    spec: SyntheticSpec = _parse_synthetic(doc)
    content, labels = generate_synthetic(spec)
    with open(args.out, "w") as fh:
        json.dump(content, fh)
    print(f"{args.out}: {len(content['trajectories'])} trajectories, {len(labels)} labeled")
    return 0


def _cmd_serve(args) -> int:
    from pathlib import Path

    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    ui_dir = args.ui
    if ui_dir is None and (Path("frontend") / "index.html").exists():
        ui_dir = "frontend"
    app = create_app(default_config=config, static_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "synth":
            return _cmd_synth(args)
        return _cmd_serve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, ContradictionError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
