"""Command-line front end: plan, sweep-gamma, identify, simulate, serve.

The CLI is a thin client of the HTTP service: every command builds a
request, sends it to the in-process ASGI app (or to ``--server URL``),
and renders the response to files and stdout.  Results are therefore
identical whether or not a server is involved.

Option values come from, in increasing precedence: built-in defaults,
a ``--config`` file of flat ``key = value`` lines (keys are the long
option names with dashes replaced by underscores), then explicit flags.

Exit codes: 0 success, 1 usage/data error, 2 mission infeasible from
every free cell.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from . import __version__

__all__ = ["main"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


class CliError(Exception):
    """A usage or data error that should exit with code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; our contract reserves 2 for
    infeasible missions, so remap usage errors to exit code 1."""

    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        self.print_usage(sys.stderr)
        raise CliError(message)


# ---------------------------------------------------------------------------
# Option plumbing


def _cells(text: str) -> list[int]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) not in (2, 3):
        raise CliError(f"expected 'row,col' or 'row,col,heading', got {text!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise CliError(f"expected integers in {text!r}") from None


def _float_list(text: str) -> list[float]:
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise CliError("expected a comma-separated list of gamma values")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise CliError(f"expected numbers in {text!r}") from None


def read_config(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` config file (``#`` comments allowed)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from None
    cfg: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        ln = raw.strip()
        if not ln or ln.startswith("#"):
            continue
        key, eq, val = ln.partition("=")
        if not eq or not key.strip():
            raise CliError(f"malformed config line {lineno}: {raw!r}")
        cfg[key.strip().replace("-", "_")] = val.strip()
    return cfg


def _resolve(
    args: argparse.Namespace,
    cfg: Mapping[str, str],
    key: str,
    convert: Callable[[str], object],
    default: object,
) -> object:
    """Flag if given, else config value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in cfg:
        try:
            return convert(cfg[key])
        except (ValueError, TypeError):
            raise CliError(f"bad config value for {key}: {cfg[key]!r}") from None
    return default


def _read_file(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc}") from None


def _write_file(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from None


# ---------------------------------------------------------------------------
# Service client


def _request(server: str | None, path: str, payload: dict) -> dict:
    """POST to the remote server, or drive the ASGI app in-process."""
    if server:
        try:
            with httpx.Client(base_url=server, timeout=None) as client:
                resp = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"cannot reach server {server}: {exc}") from None
    else:
        from .service import create_app

        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://pfsaplan.internal"
            ) as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(go())
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise CliError(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


# ---------------------------------------------------------------------------
# Shared model-spec options


def _add_model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", help="path to the ASCII occupancy map")
    p.add_argument("--model", choices=("2d", "heading", "history"))
    p.add_argument("--gamma", type=float, help="uniform-uncertainty gamma in (0, 1]")
    p.add_argument("--uncertainty-file", help="path to a 'uc'/'uc_state' file")
    p.add_argument("--goal", help="override the map goal: row,col[,heading]")
    p.add_argument("--headings", type=int, help="heading count (heading model)")
    p.add_argument("--max-turn-deg", type=int, help="turn limit per move (heading model)")
    p.add_argument("--theta-start", type=float)
    p.add_argument("--tie-tol", type=float)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--server", help="remote service URL (default: in-process)")


def _model_payload(args: argparse.Namespace, cfg: Mapping[str, str]) -> dict:
    map_path = _resolve(args, cfg, "map", str, None)
    if map_path is None:
        raise CliError("--map is required")
    payload: dict = {
        "map_text": _read_file(str(map_path), "map file"),
        "model": _resolve(args, cfg, "model", str, "2d"),
        "headings": _resolve(args, cfg, "headings", int, 24),
        "max_turn_deg": _resolve(args, cfg, "max_turn_deg", int, 45),
        "theta_start": _resolve(args, cfg, "theta_start", float, 0.99),
        "tie_tol": _resolve(args, cfg, "tie_tol", float, 1e-9),
    }
    gamma = _resolve(args, cfg, "gamma", float, None)
    unc_path = _resolve(args, cfg, "uncertainty_file", str, None)
    if gamma is not None and unc_path is not None:
        raise CliError("give --gamma or --uncertainty-file, not both")
    if gamma is not None:
        payload["gamma"] = gamma
    if unc_path is not None:
        payload["uncertainty_text"] = _read_file(str(unc_path), "uncertainty file")
    goal = _resolve(args, cfg, "goal", _cells, None)
    if goal is not None:
        payload["goal"] = _cells(goal) if isinstance(goal, str) else goal
    return payload


def _emit(primary_text: str, out_path: str | None, summary: list[str]) -> None:
    """Write the artifact to ``--out`` (summary to stdout), or print the
    artifact to stdout (summary to stderr) so piped output stays clean."""
    if out_path:
        _write_file(out_path, primary_text)
        for line in summary:
            print(line)
    else:
        for line in summary:
            print(line, file=sys.stderr)
        sys.stdout.write(primary_text)


# ---------------------------------------------------------------------------
# Commands


def _cmd_plan(args: argparse.Namespace) -> int:
    cfg = read_config(args.config) if args.config else {}
    payload = _model_payload(args, cfg)
    svg_path = _resolve(args, cfg, "svg", str, None)
    payload["svg"] = svg_path is not None
    payload["cell_px"] = _resolve(args, cfg, "cell_px", int, 24)
    server = _resolve(args, cfg, "server", str, None)
    body = _request(server, "/plan", payload)
    summary = [f"K = {body['k']}", f"gamma = {body['gamma']!r}"]
    for i, step in enumerate(body["steps"], start=1):
        summary.append(
            f"step {i}: theta_min={step['theta_min']!r} chi_goal={step['chi_goal']!r}"
        )
    summary.append(
        f"feasible states: {body['feasible_states']}/{body['total_states'] - 1}"
    )
    if svg_path:
        _write_file(str(svg_path), body["svg"])
    _emit(body["plan_csv"], _resolve(args, cfg, "out", str, None), summary)
    if body["infeasible_everywhere"]:
        print("no state outside the goal can reach it", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_sweep_gamma(args: argparse.Namespace) -> int:
    cfg = read_config(args.config) if args.config else {}
    payload = _model_payload(args, cfg)
    payload.pop("gamma", None)
    payload.pop("uncertainty_text", None)
    gammas = _resolve(args, cfg, "gammas", _float_list, None)
    if gammas is None:
        raise CliError("--gammas is required (comma-separated values in (0, 1])")
    start = _resolve(args, cfg, "start", _cells, None)
    if start is None:
        raise CliError("--start is required")
    payload["gammas"] = _float_list(gammas) if isinstance(gammas, str) else gammas
    payload["start"] = _cells(start) if isinstance(start, str) else start
    payload["beta"] = _resolve(args, cfg, "beta", float, 0.0)
    server = _resolve(args, cfg, "server", str, None)
    body = _request(server, "/sweep/gamma", payload)
    summary = [
        f"gamma={row['gamma']!r}: path_length={row['path_length']} "
        f"p_goal_exact={row['p_goal_exact']!r}"
        for row in body["rows"]
    ]
    _emit(body["csv"], _resolve(args, cfg, "out", str, None), summary)
    return EXIT_OK


def _cmd_identify(args: argparse.Namespace) -> int:
    cfg = read_config(args.config) if args.config else {}
    log_path = _resolve(args, cfg, "log", str, None)
    if log_path is None:
        raise CliError("--log is required")
    payload = {
        "log_csv": _read_file(str(log_path), "trajectory log"),
        "window": _resolve(args, cfg, "window", int, 200),
        "max_shift": _resolve(args, cfg, "max_shift", int, 50),
        "bins": _resolve(args, cfg, "bins", int, 32),
        "upper": _resolve(args, cfg, "upper", float, 2.0),
        "samples": _resolve(args, cfg, "samples", int, 100_000),
        "seed": _resolve(args, cfg, "seed", int, 0),
        "truncation_tol": _resolve(args, cfg, "truncation_tol", float, 1e-3),
    }
    server = _resolve(args, cfg, "server", str, None)
    body = _request(server, "/identify", payload)
    hist_path = _resolve(args, cfg, "histogram_out", str, None)
    if hist_path:
        _write_file(str(hist_path), body["histogram_csv"])
    summary = [
        f"gamma = {body['gamma']!r}",
        "delays: " + " ".join(str(d) for d in body["delays"]),
        f"truncated_mass = {body['truncated_mass']!r}",
    ]
    summary += [
        f"uc {name} {body['probs'][name]!r} (se {body['se'][name]!r})"
        for name in sorted(body["probs"])
        if name != "stay" and body["probs"][name] > 0.0
    ]
    _emit(body["uncertainty_text"], _resolve(args, cfg, "out", str, None), summary)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = read_config(args.config) if args.config else {}
    payload = _model_payload(args, cfg)
    start = _resolve(args, cfg, "start", _cells, None)
    if start is None:
        raise CliError("--start is required")
    payload["start"] = _cells(start) if isinstance(start, str) else start
    payload["beta"] = _resolve(args, cfg, "beta", float, 0.0)
    payload["runs"] = _resolve(args, cfg, "runs", int, 1000)
    payload["seed"] = _resolve(args, cfg, "seed", int, 0)
    max_steps = _resolve(args, cfg, "max_steps", int, None)
    if max_steps is not None:
        payload["max_steps"] = max_steps
    trace_path = _resolve(args, cfg, "trace_out", str, None)
    payload["trace"] = trace_path is not None
    server = _resolve(args, cfg, "server", str, None)
    body = _request(server, "/simulate", payload)
    if trace_path:
        _write_file(str(trace_path), body["trace_csv"])
    lines = [
        f"p_goal = {body['p_goal']!r} +- {body['se_goal']!r} "
        f"({body['n_goal']}/{body['runs']})",
        f"p_obstacle = {body['p_obstacle']!r} +- {body['se_obstacle']!r} "
        f"({body['n_obstacle']}/{body['runs']})",
        f"step_limit runs: {body['n_step_limit']}",
        f"exact p_goal = {body['exact_p_goal']!r}",
        f"exact p_obstacle = {body['exact_p_obstacle']!r}",
        f"identity |p_goal + p_obstacle - 1| = {body['exact_identity_gap']!r}",
    ]
    out_path = _resolve(args, cfg, "out", str, None)
    result_json = json.dumps(
        {k: v for k, v in body.items() if k != "trace_csv"}, sort_keys=True
    ) + "\n"
    if out_path:
        _write_file(str(out_path), result_json)
    for line in lines:
        print(line)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    cfg = read_config(args.config) if args.config else {}
    import uvicorn

    from .service import create_app

    uvicorn.run(
        create_app(),
        host=str(_resolve(args, cfg, "host", str, "127.0.0.1")),
        port=int(_resolve(args, cfg, "port", int, 8000)),
        log_level="info",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> _Parser:
    parser = _Parser(prog="pfsaplan", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("plan", help="build the plant, plan, export the gradient field")
    _add_model_options(p)
    p.add_argument("--out", help="write the plan CSV here (default: stdout)")
    p.add_argument("--svg", help="also render the field to this SVG file")
    p.add_argument("--cell-px", type=int, help="SVG cell size in pixels")
    _add_common(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("sweep-gamma", help="path length and exact success per gamma")
    _add_model_options(p)
    p.add_argument("--gammas", help="comma-separated gamma values")
    p.add_argument("--start", help="start cell: row,col[,heading]")
    p.add_argument("--beta", type=float, help="turn-penalty weight in [0, 1]")
    p.add_argument("--out", help="write the sweep CSV here (default: stdout)")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep_gamma)

    p = sub.add_parser("identify", help="estimate uncertainty from a trajectory log")
    p.add_argument("--log", help="trajectory CSV: t,x,y[,heading],target_row,target_col")
    p.add_argument("--window", type=int, help="samples per constant-delay interval")
    p.add_argument("--max-shift", type=int, help="largest delay shift searched")
    p.add_argument("--bins", type=int, help="deviation histogram bins")
    p.add_argument("--upper", type=float, help="histogram range in cell widths")
    p.add_argument("--samples", type=int, help="Monte Carlo samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--truncation-tol", type=float)
    p.add_argument("--out", help="write the uncertainty file here (default: stdout)")
    p.add_argument("--histogram-out", help="write the deviation histogram CSV here")
    _add_common(p)
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("simulate", help="plan inline and run missions")
    _add_model_options(p)
    p.add_argument("--start", help="start cell: row,col[,heading]")
    p.add_argument("--beta", type=float, help="turn-penalty weight in [0, 1]")
    p.add_argument("--runs", type=int, help="Monte Carlo mission count")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int, help="step budget per mission")
    p.add_argument("--trace-out", help="write the seed run's trace CSV here")
    p.add_argument("--out", help="write the result JSON here")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help(sys.stderr)
            return EXIT_ERROR
        return int(args.func(args))
    except CliError as exc:
        print(f"pfsaplan: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
