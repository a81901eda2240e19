"""Command-line client for the embdim service.

Every subcommand (except ``serve``) talks to the HTTP API: against a remote
instance when ``--server`` is given, otherwise against an in-process
transport so no separate server is needed.
"""

from __future__ import annotations

import argparse
import json
import sys


class ClientError(RuntimeError):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


class ServiceClient:
    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(
                create_app(), base_url="http://embdim.internal", raise_server_exceptions=False
            )

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        return self._handle(resp)

    def get(self, path: str) -> dict:
        return self._handle(self._client.get(path))

    @staticmethod
    def _handle(resp) -> dict:
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            if isinstance(detail, dict) and "stage" in detail:
                msg = f"stage={detail['stage']} dim={detail['dimension']}: {detail['message']}"
            else:
                msg = str(detail)
            raise ClientError(msg, exit_code=2 if resp.status_code < 500 else 1)
        return resp.json()

    def close(self):
        self._client.close()


def _csv_ints(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _csv_floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embdim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_server(p):
        p.add_argument("--server", default=None, help="base URL of a running embdim service")

    p_synth = sub.add_parser("synth", help="generate a synthetic embedding/target dataset")
    add_server(p_synth)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--name", default="synthetic")
    p_synth.add_argument("--dim", type=int, default=768)
    p_synth.add_argument("--latent-k", type=int, default=8)
    p_synth.add_argument("--n", type=int, default=5000)
    p_synth.add_argument("--sigma-y", type=float, default=0.0)
    p_synth.add_argument("--sigma-v", type=float, default=0.0)
    p_synth.add_argument("--nuisance-energy", type=float, default=0.0)
    p_synth.add_argument("--nuisance-dims", type=int, default=0)
    p_synth.add_argument("--nonlinear", action="store_true")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--fractions", type=_csv_floats, default=[0.8, 0.1, 0.1])

    p_sweep = sub.add_parser("sweep", help="run the latent-dimension sweep")
    add_server(p_sweep)
    p_sweep.add_argument("--embeddings", required=True)
    p_sweep.add_argument("--targets", default=None)
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.add_argument("--ladder", type=_csv_ints, default=None, help="comma list, e.g. 1,2,4,8")
    p_sweep.add_argument("--no-raw", action="store_true", help="skip the uncompressed reference row")
    p_sweep.add_argument("--regressor", choices=("forest", "mlp"), default="forest")
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--cache-dir", default=None, help="defaults to $EMBDIM_CACHE")
    p_sweep.add_argument("--t-test", choices=("paired", "welch"), default="paired")
    p_sweep.add_argument("--id-threshold", type=float, default=0.10)
    p_sweep.add_argument(
        "--id-rule",
        choices=("normalized", "ratio"),
        default="normalized",
        help="intrinsic dimension: normalized loss <= t, or loss <= (1+t)*min",
    )
    p_sweep.add_argument(
        "--baseline",
        action="append",
        default=[],
        metavar="LABEL=PATH",
        help="class-probability feature file; repeatable",
    )
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--no-plots", action="store_true")
    p_sweep.add_argument("--ae-epochs", type=int, default=100)
    p_sweep.add_argument("--ae-patience", type=int, default=5)
    p_sweep.add_argument("--ae-batch", type=int, default=256)
    p_sweep.add_argument("--ae-lr", type=float, default=1e-3)
    p_sweep.add_argument("--ae-hidden", type=_csv_ints, default=[])
    p_sweep.add_argument("--trees", type=int, default=100)
    p_sweep.add_argument("--max-features", type=int, default=None)
    p_sweep.add_argument("--forest-jobs", type=int, default=1)
    p_sweep.add_argument("--mlp-hidden", type=int, default=64)
    p_sweep.add_argument("--mlp-dropout", type=float, default=0.0)

    p_base = sub.add_parser("baseline", help="evaluate one class-probability baseline")
    add_server(p_base)
    p_base.add_argument("--embeddings", required=True)
    p_base.add_argument("--targets", default=None)
    p_base.add_argument("--features", required=True)
    p_base.add_argument("--features-targets", default=None)
    p_base.add_argument("--label", required=True)
    p_base.add_argument("--regressor", choices=("forest", "mlp"), default="forest")
    p_base.add_argument("--seed", type=int, default=0)
    p_base.add_argument("--trees", type=int, default=100)

    p_report = sub.add_parser("report", help="summarize reports and render plots")
    add_server(p_report)
    p_report.add_argument("reports", nargs="+", help="paths to report.json files")
    p_report.add_argument("--out-dir", required=True)
    p_report.add_argument("--names", type=lambda s: s.split(","), default=None)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8237)

    return parser


def _parse_baselines(entries: list[str]) -> list[dict]:
    out = []
    for entry in entries:
        label, sep, path = entry.partition("=")
        if not sep or not label or not path:
            raise ClientError(f"--baseline expects LABEL=PATH, got {entry!r}", exit_code=2)
        out.append({"label": label, "path": path})
    return out


def _cmd_synth(args, client: ServiceClient) -> int:
    payload = {
        "out_dir": args.out_dir,
        "name": args.name,
        "dim": args.dim,
        "latent_k": args.latent_k,
        "n": args.n,
        "sigma_y": args.sigma_y,
        "sigma_v": args.sigma_v,
        "nuisance_energy": args.nuisance_energy,
        "nuisance_dims": args.nuisance_dims,
        "nonlinear": args.nonlinear,
        "seed": args.seed,
        "fractions": args.fractions,
    }
    resp = client.post("/synth", payload)
    print(json.dumps(resp, indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args, client: ServiceClient) -> int:
    payload = {
        "embeddings_path": args.embeddings,
        "targets_path": args.targets,
        "out_dir": args.out_dir,
        "include_raw": not args.no_raw,
        "regressor": args.regressor,
        "seed": args.seed,
        "cache_dir": args.cache_dir,
        "t_test_variant": args.t_test,
        "id_threshold": args.id_threshold,
        "id_rule": args.id_rule,
        "workers": args.workers,
        "baselines": _parse_baselines(args.baseline),
        "emit_plots": not args.no_plots,
        "ae": {
            "max_epochs": args.ae_epochs,
            "patience": args.ae_patience,
            "batch_size": args.ae_batch,
            "learning_rate": args.ae_lr,
            "hidden": args.ae_hidden,
        },
        "forest": {
            "n_trees": args.trees,
            "max_features": args.max_features,
            "n_jobs": args.forest_jobs,
        },
        "mlp": {"hidden_dim": args.mlp_hidden, "dropout": args.mlp_dropout},
    }
    if args.ladder is not None:
        payload["ladder"] = args.ladder
    resp = client.post("/sweep", payload)
    report = resp["report"]
    print(f"report: {resp['report_path']}")
    for plot in sorted(resp["plot_paths"].values()):
        print(f"plot:   {plot}")
    print(f"best latent dimension: {report['best_dimension']}")
    print(f"intrinsic dimension:   {report['intrinsic_dimension']}")
    header = f"{'dim':>6}  {'mean huber':>12}  {'p vs best':>10}  band"
    print(header)
    rows = report["curve"] + ([report["raw"]] if report.get("raw") else []) + report["baselines"]
    for e in rows:
        print(
            f"{str(e['dimension']):>6}  {e['mean_huber']:>12.6f}  "
            f"{e['p_vs_best']:>10.4f}  {e['significance_band']}"
        )
    return 0


def _cmd_baseline(args, client: ServiceClient) -> int:
    payload = {
        "embeddings_path": args.embeddings,
        "targets_path": args.targets,
        "features_path": args.features,
        "features_targets_path": args.features_targets,
        "label": args.label,
        "regressor": args.regressor,
        "seed": args.seed,
        "forest": {"n_trees": args.trees},
    }
    resp = client.post("/baseline", payload)
    print(json.dumps(resp, indent=2, sort_keys=True))
    return 0


def _cmd_report(args, client: ServiceClient) -> int:
    payload = {"report_paths": args.reports, "out_dir": args.out_dir, "names": args.names}
    resp = client.post("/report/render", payload)
    for summary in resp["summaries"]:
        raw = summary["raw_mean_huber"]
        raw_text = "-" if raw is None else f"{raw:.6f} (p vs best {summary['raw_p_vs_best']:.4f})"
        print(
            f"{summary['name']}: best dz={summary['best_dimension']} "
            f"(huber {summary['best_mean_huber']:.6f}), "
            f"intrinsic dimension {summary['intrinsic_dimension']}, raw {raw_text}"
        )
    for plot in sorted(resp["plot_paths"].values()):
        print(f"plot: {plot}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    handlers = {
        "synth": _cmd_synth,
        "sweep": _cmd_sweep,
        "baseline": _cmd_baseline,
        "report": _cmd_report,
    }
    client = ServiceClient(args.server)
    try:
        return handlers[args.command](args, client)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
