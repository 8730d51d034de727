"""Experiment runner CLI.

A thin client of the HTTP service: every subcommand builds a request from the
JSON experiment config, posts it (in-process by default, or to ``--server``),
and writes the returned numbers as CSV/JSON artifacts.  Output files carry a
``# config_hash=... seed=...`` header line so every artifact self-describes.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


class CliConfigError(Exception):
    pass


class CliNumericalError(Exception):
    pass


class ServiceClient:
    """POST JSON to the service, in-process unless a server URL is given."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient
            from .service import app
            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code in (400, 422):
            raise CliConfigError(_detail(resp))
        if resp.status_code >= 500:
            raise CliNumericalError(_detail(resp))
        return resp.json()


def _detail(resp) -> str:
    try:
        return json.dumps(resp.json().get("detail"))
    except Exception:
        return resp.text


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliConfigError(f"config file not found: {path}")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliConfigError(f"config is not valid JSON: {exc}") from exc


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


def _require(cfg: dict, key: str) -> dict:
    if key not in cfg:
        raise CliConfigError(f"config is missing the {key!r} section")
    return cfg[key]


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path: Path, header: str, rows, stamp: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {stamp}\n{header}\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _read_params_b64(cfg: dict, key: str) -> str | None:
    path = cfg.get("assets", {}).get(key)
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise CliConfigError(f"asset file not found: {path}")
    return base64.b64encode(p.read_bytes()).decode()


# ------------------------------------------------------------------ commands

def cmd_gen_channels(args, client: ServiceClient) -> int:
    cfg = load_config(args.config)
    sys_cfg = _require(cfg, "sys")
    resp = client.post("/channels/generate", {"sys": sys_cfg})
    out = _outdir(args)
    stamp = f"config_hash={config_hash(cfg)} seed={sys_cfg.get('seed', 0)}"
    rows = []
    for k, (mrow, prow) in enumerate(zip(resp["magnitude"], resp["phase"])):
        rows.extend((k, t, m, ph) for t, (m, ph) in enumerate(zip(mrow, prow)))
    write_csv(out / "trace.csv", "device,round,magnitude,phase", rows, stamp)
    print(f"wrote {out / 'trace.csv'}")
    return 0


def _trace_payload(path: str) -> dict:
    from .channel import ChannelTrace
    trace = ChannelTrace.from_csv(path)
    return {"magnitude": trace.magnitude.tolist(), "phase": trace.phase.tolist()}


def cmd_optimize(args, client: ServiceClient) -> int:
    cfg = load_config(args.config)
    sys_cfg = _require(cfg, "sys")
    payload = {
        "sys": sys_cfg,
        "eps0": cfg.get("eps0", 1e-6),
        "max_iter": cfg.get("max_iter", 200),
    }
    if args.trace:
        payload["trace"] = _trace_payload(args.trace)
    resp = client.post("/optimize", payload)
    out = _outdir(args)
    stamp = f"config_hash={config_hash(cfg)} seed={sys_cfg.get('seed', 0)}"
    alloc_rows = []
    for k, prow in enumerate(resp["p"]):
        alloc_rows.extend((k, t, pw, resp["eta"][t]) for t, pw in enumerate(prow))
    write_csv(out / "allocation.csv", "device,round,power,eta", alloc_rows, stamp)
    write_csv(out / "mse_history.csv", "iteration,time_average_mse",
              list(enumerate(resp["mse_history"])), stamp)
    write_json(out / "kkt.json", {
        "config_hash": config_hash(cfg), "seed": sys_cfg.get("seed", 0),
        "iterations": resp["iterations"], "converged": resp["converged"],
        "mu": resp["mu"], "per_device": resp["kkt"],
    })
    print(f"solved in {resp['iterations']} iterations, "
          f"time-average MSE {resp['time_average_mse']:.6g}")
    return 0


def cmd_train_net(args, client: ServiceClient) -> int:
    cfg = load_config(args.config)
    resp = client.post("/net/train", {"sys": _require(cfg, "sys"),
                                      "train": _require(cfg, "train")})
    out = _outdir(args)
    stamp = f"config_hash={config_hash(cfg)} seed={cfg['train'].get('seed', 0)}"
    mode = cfg["train"].get("mode", "knowledge_guided")
    params_path = out / f"net_params_{mode}.bin"
    params_path.write_bytes(base64.b64decode(resp["params_b64"]))
    write_csv(out / f"train_log_{mode}.csv", "epoch,loss,penalty,feasible_fraction",
              [(e["epoch"], e["loss"], e["penalty"], e["feasible_fraction"])
               for e in resp["log"]], stamp)
    print(f"wrote {params_path} (final feasible fraction "
          f"{resp['final_feasible_fraction']:.4f})")
    return 0


def cmd_simulate(args, client: ServiceClient) -> int:
    cfg = load_config(args.config)
    sys_cfg = _require(cfg, "sys")
    fl_cfg = _require(cfg, "fl")
    schemes = cfg.get("schemes", ["error_free"])
    seeds_list = ([int(s) for s in args.seeds.split(",")] if args.seeds
                  else cfg.get("seeds", [0]))
    if not seeds_list:
        raise CliConfigError("no seeds given (config 'seeds' or --seeds)")
    kg_b64 = _read_params_b64(cfg, "kg_params")
    kf_b64 = _read_params_b64(cfg, "kf_params")
    if "knowledge_guided" in schemes and kg_b64 is None:
        raise CliConfigError("schemes include knowledge_guided but assets.kg_params is missing")
    if "knowledge_free" in schemes and kf_b64 is None:
        raise CliConfigError("schemes include knowledge_free but assets.kf_params is missing")
    out = _outdir(args)
    chash = config_hash(cfg)

    def run_seed(seed: int):
        payload = {
            "sys": sys_cfg, "fl": fl_cfg, "schemes": schemes, "seed": seed,
            "kg_params_b64": kg_b64, "kf_params_b64": kf_b64,
            "eps0": cfg.get("eps0", 1e-6), "max_iter": cfg.get("max_iter", 200),
        }
        resp = client.post("/simulate", payload)
        for scheme, run in resp["runs"].items():
            rows = [(m["round"], m["loss"], m["accuracy"], m["mse"],
                     m["grad_norm_sq"], m["chi"]) for m in run["metrics"]]
            write_csv(out / f"metrics_{scheme}_seed{seed}.csv",
                      "round,loss,accuracy,mse,grad_norm_sq,chi", rows,
                      f"config_hash={chash} seed={seed}")
        return seed, {s: r["final_accuracy"] for s, r in resp["runs"].items()}

    if args.threads > 1 and len(seeds_list) > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_seed, seeds_list))
    else:
        results = [run_seed(s) for s in seeds_list]
    for seed, accs in sorted(results):
        summary = ", ".join(f"{s}={a:.4f}" for s, a in accs.items())
        print(f"seed {seed}: {summary}")
    return 0


def cmd_bench(args, client: ServiceClient) -> int:
    cfg = load_config(args.config)
    kg_b64 = _read_params_b64(cfg, "kg_params")
    if kg_b64 is None:
        raise CliConfigError("bench needs assets.kg_params (a trained net)")
    payload = {
        "sys": _require(cfg, "sys"), "params_b64": kg_b64,
        "repeats": cfg.get("bench", {}).get("repeats", 5),
        "eps0": cfg.get("eps0", 1e-6), "max_iter": cfg.get("max_iter", 200),
    }
    resp = client.post("/bench", payload)
    out = _outdir(args)
    resp["config_hash"] = config_hash(cfg)
    resp["seed"] = cfg["sys"].get("seed", 0)
    write_json(out / "bench.json", resp)
    print(f"solver {resp['solver_seconds']:.4f}s vs net {resp['net_seconds'] * 1e3:.3f}ms "
          f"-> speedup {resp['speedup']:.1f}x, feasible fraction {resp['feasible_fraction']:.4f}")
    return 0


def cmd_bound(args, client: ServiceClient) -> int:
    cfg = load_config(args.config)
    payload = {
        "sys": _require(cfg, "sys"), "fl": _require(cfg, "fl"),
        "scheme": cfg.get("bound", {}).get("scheme", "full_power"),
        "seed": cfg.get("bound", {}).get("seed", 0),
        "calib_rounds": cfg.get("bound", {}).get("calib_rounds", 30),
    }
    resp = client.post("/bound", payload)
    out = _outdir(args)
    resp["config_hash"] = config_hash(cfg)
    write_json(out / "bound.json", resp)
    verdict = "holds" if resp["bound_holds"] else "VIOLATED"
    print(f"bound {resp['bound']['total']:.6g} vs empirical "
          f"{resp['empirical_time_avg_grad_norm_sq']:.6g} -> {verdict}")
    return 0


def cmd_serve(args, _client=None) -> int:
    import uvicorn
    uvicorn.run("airfl.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airfl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trace=False):
        p.add_argument("--config", required=True, help="experiment JSON config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
        p.add_argument("--threads", type=int, default=1, help="parallel seeds")
        p.add_argument("--seeds", default=None, help="comma-separated seed override")
        if trace:
            p.add_argument("--trace", default=None, help="channel trace CSV (default: generate)")

    common(sub.add_parser("gen-channels", help="generate and export a channel trace"))
    common(sub.add_parser("optimize", help="run the alternating solver"), trace=True)
    common(sub.add_parser("train-net", help="train the power-control network"))
    common(sub.add_parser("simulate", help="run federated training per scheme and seed"))
    common(sub.add_parser("bench", help="time the solver against net inference"))
    common(sub.add_parser("bound", help="evaluate the convergence bound report"))
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


COMMANDS = {
    "gen-channels": cmd_gen_channels,
    "optimize": cmd_optimize,
    "train-net": cmd_train_net,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "bound": cmd_bound,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        client = ServiceClient(args.server)
        return COMMANDS[args.command](args, client)
    except CliConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CliNumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
