"""FastAPI service wrapping the core package.

Endpoints execute synchronously in the request worker; sweeps are
long-running, so clients should use generous timeouts.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..autoencoder import AeTrainConfig
from ..ingest import FormatError, load_embedding_file
from ..plots import emit_plots, plot_normalized
from ..regressor import ForestConfig, MLPConfig
from ..sweep import (
    SweepConfig,
    SweepStageError,
    load_report_dict,
    report_from_dict,
    report_to_dict,
    run_baseline,
    run_sweep,
    write_report,
    align_baseline_features,
)
from ..synthgen import SynthConfig, generate_to_files
from . import schemas

CACHE_ENV_VAR = "EMBDIM_CACHE"


def _sweep_config(req: schemas.SweepRequest) -> SweepConfig:
    cache_dir = req.cache_dir or os.environ.get(CACHE_ENV_VAR) or None
    return SweepConfig(
        ladder=tuple(req.ladder),
        include_raw=req.include_raw,
        regressor=req.regressor,
        seed=req.seed,
        t_test_variant=req.t_test_variant,
        id_threshold=req.id_threshold,
        id_rule=req.id_rule,
        cache_dir=cache_dir,
        workers=req.workers,
        baselines=tuple((b.label, b.path) for b in req.baselines),
        ae=AeTrainConfig(
            max_epochs=req.ae.max_epochs,
            patience=req.ae.patience,
            batch_size=req.ae.batch_size,
            learning_rate=req.ae.learning_rate,
            hidden=tuple(req.ae.hidden),
        ),
        forest=ForestConfig(
            n_trees=req.forest.n_trees,
            max_depth=req.forest.max_depth,
            min_samples_split=req.forest.min_samples_split,
            min_samples_leaf=req.forest.min_samples_leaf,
            max_features=req.forest.max_features,
            bootstrap=req.forest.bootstrap,
            n_jobs=req.forest.n_jobs,
        ),
        mlp=MLPConfig(
            hidden_dim=req.mlp.hidden_dim,
            dropout=req.mlp.dropout,
            huber_delta=req.mlp.huber_delta,
            patience=req.mlp.patience,
            max_epochs=req.mlp.max_epochs,
            batch_size=req.mlp.batch_size,
            learning_rate=req.mlp.learning_rate,
        ),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="embdim", version=__version__)

    @app.exception_handler(SweepStageError)
    async def stage_error_handler(request: Request, exc: SweepStageError):
        return JSONResponse(
            status_code=400,
            content={
                "detail": {
                    "stage": exc.stage,
                    "dimension": str(exc.dimension),
                    "message": str(exc),
                }
            },
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        # FormatError / ModelFormatError subclass ValueError
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_file_handler(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=400, content={"detail": f"file not found: {exc.filename}"})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = SynthConfig(
            dim=req.dim,
            latent_k=req.latent_k,
            n=req.n,
            sigma_y=req.sigma_y,
            sigma_v=req.sigma_v,
            nuisance_energy=req.nuisance_energy,
            nuisance_dims=req.nuisance_dims,
            nonlinear=req.nonlinear,
            seed=req.seed,
            fractions=req.fractions,
        )
        emb_path, targets_path = generate_to_files(cfg, out_dir / f"{req.name}.emb")
        dataset = load_embedding_file(emb_path, targets_path)
        return schemas.SynthResponse(
            embeddings_path=str(emb_path),
            targets_path=str(targets_path),
            n=dataset.n,
            dim=dataset.dim,
            provenance=dataset.provenance,
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        dataset = load_embedding_file(req.embeddings_path, req.targets_path)
        cfg = _sweep_config(req)
        report = run_sweep(dataset, cfg)
        paths = write_report(report, req.out_dir)
        plot_paths: dict[str, str] = {}
        if req.emit_plots:
            plot_paths = {k: str(v) for k, v in emit_plots(report, req.out_dir).items()}
        return schemas.SweepResponse(
            report=report_to_dict(report),
            report_path=str(paths["report_json"]),
            report_csv_path=str(paths["report_csv"]),
            run_meta_path=str(paths["run_meta"]),
            plot_paths=plot_paths,
        )

    @app.post("/baseline", response_model=schemas.BaselineResponse)
    def baseline(req: schemas.BaselineRequest):
        dataset = load_embedding_file(req.embeddings_path, req.targets_path)
        features_ds = load_embedding_file(req.features_path, req.features_targets_path)
        features = align_baseline_features(dataset, features_ds)
        cfg = SweepConfig(
            ladder=(1,),  # unused by run_baseline
            regressor=req.regressor,
            seed=req.seed,
            forest=ForestConfig(
                n_trees=req.forest.n_trees,
                max_depth=req.forest.max_depth,
                min_samples_split=req.forest.min_samples_split,
                min_samples_leaf=req.forest.min_samples_leaf,
                max_features=req.forest.max_features,
                bootstrap=req.forest.bootstrap,
                n_jobs=req.forest.n_jobs,
            ),
            mlp=MLPConfig(
                hidden_dim=req.mlp.hidden_dim,
                dropout=req.mlp.dropout,
                huber_delta=req.mlp.huber_delta,
                patience=req.mlp.patience,
                max_epochs=req.mlp.max_epochs,
                batch_size=req.mlp.batch_size,
                learning_rate=req.mlp.learning_rate,
            ),
        )
        entry, _errors = run_baseline(dataset, features, req.label, cfg)
        return schemas.BaselineResponse(
            label=entry.label, dimension=int(entry.dimension), mean_huber=entry.mean_huber
        )

    @app.post("/report/render", response_model=schemas.ReportRenderResponse)
    def report_render(req: schemas.ReportRenderRequest):
        if not req.report_paths:
            raise ValueError("no report paths given")
        names = req.names or [Path(p).parent.name or f"report{i}" for i, p in enumerate(req.report_paths)]
        if len(names) != len(req.report_paths):
            raise ValueError("names must match report_paths in length")
        reports = [report_from_dict(load_report_dict(p)) for p in req.report_paths]
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        plot_paths: dict[str, str] = {}
        if len(reports) == 1:
            plot_paths = {k: str(v) for k, v in emit_plots(reports[0], out_dir).items()}
        else:
            produced = plot_normalized(list(zip(names, reports)), out_dir, stem="normalized_overlay")
            plot_paths = {f"overlay_{k}": str(v) for k, v in produced.items()}
        summaries = []
        for name, rep in zip(names, reports):
            best = next(e for e in rep.entries if e.dimension == rep.best_dimension)
            summaries.append(
                schemas.ReportSummary(
                    name=name,
                    best_dimension=rep.best_dimension,
                    intrinsic_dimension=rep.intrinsic_dimension,
                    best_mean_huber=best.mean_huber,
                    raw_mean_huber=None if rep.raw is None else rep.raw.mean_huber,
                    raw_p_vs_best=None if rep.raw is None else rep.raw.p_vs_best,
                )
            )
        return schemas.ReportRenderResponse(summaries=summaries, plot_paths=plot_paths)

    return app
