"""fedsim command line: a thin client of the HTTP service.

Without --server the service app is invoked in-process over an ASGI
transport, so local runs need no running server and use the exact same
wire contract as remote ones. All files are written atomically.

Exit codes: 0 success, 2 validation or parse failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from . import __version__
from .artifacts import atomic_write_text

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _post(server: str | None, path: str, payload: dict) -> dict:
    """POST to a remote server, or to the in-process app when server is None."""
    try:
        if server:
            with httpx.Client(base_url=server, timeout=None) as client:
                response = client.post(path, json=payload)
        else:
            from .service import create_app

            transport = httpx.ASGITransport(app=create_app())

            async def go() -> httpx.Response:
                async with httpx.AsyncClient(
                    transport=transport, base_url="http://fedsim.local", timeout=None
                ) as client:
                    return await client.post(path, json=payload)

            response = asyncio.run(go())
    except httpx.HTTPError as exc:
        raise CliFailure(EXIT_IO, f"cannot reach server: {exc}") from exc

    if response.status_code in (400, 422):
        detail = response.json().get("detail", response.text)
        raise CliFailure(EXIT_INVALID, f"invalid input: {detail}")
    if response.status_code != 200:
        raise CliFailure(EXIT_IO, f"server error {response.status_code}: {response.text}")
    return response.json()


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise CliFailure(EXIT_INVALID, f"{path} is not UTF-8 text: {exc}") from exc


def _write(path: Path, text: str) -> None:
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot write {path}: {exc}") from exc


def cmd_run(args: argparse.Namespace) -> int:
    payload: dict = {"config_text": _read_text(Path(args.config))}
    if args.seed is not None:
        payload["seed"] = args.seed
    body = _post(args.server, "/run", payload)
    out = Path(args.out)
    _write(out / "metrics.csv", body["metrics_csv"])
    _write(out / "summary.json", json.dumps(body["summary"], indent=2) + "\n")
    _write(out / "partition.txt", body["partition_manifest"])
    summary = body["summary"]
    print(
        f"wrote {out / 'metrics.csv'} "
        f"({summary['rounds_completed']} rounds, final accuracy {summary['final_accuracy']:.4f})"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    payload = {"spec_text": _read_text(Path(args.spec))}
    body = _post(args.server, "/sweep", payload)
    out = Path(args.out)
    _write(out / "sweep.csv", body["sweep_csv"])
    for cell in body["cells"]:
        cell_dir = out / "cells" / cell["name"]
        _write(cell_dir / "metrics.csv", cell["metrics_csv"])
        _write(cell_dir / "summary.json", json.dumps(cell["summary"], indent=2) + "\n")
    print(f"wrote {out / 'sweep.csv'} ({len(body['cells'])} cells, axis {body['axis']})")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    labels_dir = Path(args.labels)
    if not labels_dir.is_dir():
        raise CliFailure(EXIT_IO, f"not a directory: {labels_dir}")
    files = []
    for path in sorted(labels_dir.glob("*.txt")):
        files.append({"name": path.name, "contents": _read_text(path)})
    body = _post(args.server, "/stats", {"files": files})
    out = Path(args.out)
    _write(out / "class_histogram.csv", body["histogram_csv"])
    _write(out / "box_points.csv", body["box_points_csv"])
    print(f"wrote stats for {body['files']} files, {body['boxes']} boxes to {out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic federated-learning experiment runner",
    )
    parser.add_argument("--version", action="version", version=f"fedsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single experiment from a config file")
    run.add_argument("--config", required=True, help="config file (key = value lines)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--server", default=None, help="remote fedsim server URL")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a sweep matrix from a spec file")
    sweep.add_argument("--spec", required=True, help="sweep spec file")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--server", default=None, help="remote fedsim server URL")
    sweep.set_defaults(func=cmd_sweep)

    stats = sub.add_parser("stats", help="corpus statistics for YOLO label files")
    stats.add_argument("--labels", required=True, help="directory of YOLO .txt files")
    stats.add_argument("--out", required=True, help="output directory")
    stats.add_argument("--server", default=None, help="remote fedsim server URL")
    stats.set_defaults(func=cmd_stats)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as failure:
        print(f"fedsim: {failure}", file=sys.stderr)
        return failure.code


if __name__ == "__main__":
    sys.exit(main())
