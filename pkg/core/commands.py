"""Comandos da CLI.

Os comandos só ligam as peças e escrevem resultados; erros do domínio
(`core.errors`) sobem até `app.ASLGroup`, que os converte em exit codes.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

import config as cfg
from core.dataset import SyntheticConfig, generate, load_annotations, load_dataset, write_dataset
from core.errors import DataError, GradCheckFailure
from core.evaluation import EvalConfig, Segment, mean_ap
from core.exports import (
    export_xlsx,
    load_parameters,
    map_table_rows,
    read_predictions,
    save_parameters,
    write_map_json,
    write_predictions,
    write_sensitivity_csv,
    write_train_log,
)
from core.gradcheck import run_gradcheck
from core.inference import InferenceConfig, detect
from core.notifications import notify
from core.sensitivity import export_sensitivity_curves
from core.trainer import (
    DEFAULT_VARIANTS,
    VARIANTS,
    TrainConfig,
    ablation,
    summarize_ablation,
    train,
)
from utils.validators import load_json_config, parse_seeds, parse_thresholds

log = logging.getLogger(__name__)

PARAMS_FILE = "params.npz"
TRAIN_LOG_FILE = "train_log.jsonl"


def _start(command: str, seed: int | str = "-") -> None:
    cfg.set_run_id(f"{command}-{seed}")


@click.command("generate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def generate_command(config_path: str, out_dir: str) -> None:
    """Gera um dataset sintético em OUT."""
    config = load_json_config(config_path, SyntheticConfig)
    _start("generate", config.seed)
    data = generate(config)
    write_dataset(data, out_dir)
    click.echo(
        f"Dataset escrito em {out_dir}: {len(data.train.videos)} treino, "
        f"{len(data.test.videos)} teste."
    )


@click.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def train_command(data_dir: str, config_path: str, out_dir: str) -> None:
    """Treina um modelo e grava parâmetros e TrainLog em OUT."""
    config = load_json_config(config_path, TrainConfig)
    _start("train", config.seed)
    dataset = load_dataset(data_dir, "train")
    eval_dataset = load_dataset(data_dir, "test") if config.eval_every else None
    result = train(dataset, config, eval_dataset)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_parameters(out / PARAMS_FILE, result.model)
    write_train_log(out / TRAIN_LOG_FILE, result.records)
    first, last = result.records[0]["total"], result.records[-1]["total"]
    click.echo(f"Treino concluído: loss {first:.4f} → {last:.4f}. Resultados em {out}.")


@click.command("infer")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--params", "params_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--split", default="test", show_default=True, type=click.Choice(["train", "test"]))
def infer_command(data_dir: str, params_path: str, out_path: str, split: str) -> None:
    """Descodifica e aplica Soft-NMS a todos os vídeos do split."""
    _start("infer")
    model = load_parameters(params_path)
    dataset = load_dataset(data_dir, split)
    if dataset.dim != model.config.dim:
        raise DataError(f"dataset tem D={dataset.dim}, modelo espera D={model.config.dim}")
    config = InferenceConfig()
    predictions = {
        v.video_id: (v.length, detect(model, v.features, config, v.video_id))
        for v in dataset.videos
    }
    write_predictions(out_path, predictions)
    total = sum(len(d) for _, d in predictions.values())
    click.echo(f"{total} detecções em {len(predictions)} vídeos → {out_path}")


@click.command("eval")
@click.option("--preds", "preds_path", required=True, type=click.Path(dir_okay=False))
@click.option("--annos", "annos_dir", required=True, type=click.Path(file_okay=False))
@click.option("--thresholds", default="0.1:0.1:0.9", show_default=True)
@click.option("--json", "json_path", default=None, type=click.Path(dir_okay=False))
@click.option("--xlsx", "xlsx_path", default=None, type=click.Path(dir_okay=False))
def eval_command(
    preds_path: str,
    annos_dir: str,
    thresholds: str,
    json_path: str | None,
    xlsx_path: str | None,
) -> None:
    """Imprime a tabela de mAP por limiar de tIoU.

    Só entram no ground truth os vídeos presentes no ficheiro de previsões.
    """
    _start("eval")
    config = EvalConfig(parse_thresholds(thresholds))
    predictions = read_predictions(preds_path)
    gts = [
        Segment(a.video_id, float(g.start), float(g.end), g.label)
        for a in load_annotations(annos_dir)
        if a.video_id in predictions
        for g in a.instances
    ]
    dets = [d for p in predictions.values() for d in p.detections]
    result = mean_ap(dets, gts, config)

    click.echo(f"{'tIoU':>8} {'mAP':>8}")
    click.echo("-" * 17)
    for row in map_table_rows(result):
        click.echo(f"{row['threshold']:>8} {row['mAP']:>8}")
    if json_path:
        write_map_json(json_path, result)
    if xlsx_path:
        written = export_xlsx(map_table_rows(result), ["threshold", "mAP"], xlsx_path)
        click.echo(f"Tabela exportada para {written}")


@click.command("gradcheck")
@click.option("--seed", "seeds", default="0", show_default=True, help="Seed, lista (0,1) ou intervalo (0-4).")
@click.option("--max-entries", default=0, show_default=True, type=click.IntRange(min=0), help="Entradas amostradas por parâmetro; 0 = todas.")
def gradcheck_command(seeds: str, max_entries: int) -> None:
    """Compara gradientes analíticos com diferenças finitas; falha com exit 3."""
    failures = []
    for seed in parse_seeds(seeds):
        _start("gradcheck", seed)
        reports = run_gradcheck(seed, max_entries or None)
        worst = max(reports, key=lambda r: r.max_rel_error)
        bad = [r for r in reports if not r.passed()]
        status = "OK" if not bad else f"FALHA ({len(bad)})"
        click.echo(
            f"seed {seed}: {len(reports)} parâmetros, pior erro relativo "
            f"{worst.max_rel_error:.2e} ({worst.parameter}): {status}"
        )
        for r in bad:
            click.echo(
                f"  {r.parameter}{list(r.index)}: analítico {r.analytic:.6e}, "
                f"numérico {r.numeric:.6e}, rel {r.max_rel_error:.2e}",
                err=True,
            )
        failures += [(seed, r.parameter) for r in bad]
    if failures:
        message = f"{len(failures)} parâmetro(s) falharam: {failures[:5]}"
        notify("Gradcheck falhou", message, severity="error")
        raise GradCheckFailure(message)


@click.command("sensitivity-dump")
@click.option("--params", "params_path", required=True, type=click.Path(dir_okay=False))
@click.option("--class", "label", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def sensitivity_dump_command(params_path: str, label: int, out_path: str) -> None:
    """Exporta as curvas p^cls, p^sot, p^eot de uma classe para CSV."""
    _start("sensitivity-dump")
    model = load_parameters(params_path)
    curves = export_sensitivity_curves(model.sensitivity, label)
    write_sensitivity_csv(out_path, curves)
    click.echo(f"{len(curves.d)} pontos escritos em {out_path}")


@click.command("ablate")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option(
    "--variants",
    default=",".join(DEFAULT_VARIANTS),
    show_default=True,
    help="Lista separada por vírgulas ou 'all' (" + ", ".join(VARIANTS) + ").",
)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def ablate_command(
    data_dir: str, config_path: str, seeds: str, variants: str, out_path: str
) -> None:
    """Treina as variantes com as mesmas seeds e compara o mAP médio."""
    seed_list = parse_seeds(seeds)
    names = VARIANTS if variants.strip() == "all" else tuple(
        v.strip() for v in variants.split(",") if v.strip()
    )
    config = load_json_config(config_path, TrainConfig, seed=seed_list[0])
    _start("ablate", seeds)
    rows = ablation(
        load_dataset(data_dir, "train"),
        config,
        seed_list,
        load_dataset(data_dir, "test"),
        names,
    )
    summary = summarize_ablation(rows)
    payload = {
        "runs": [r._asdict() for r in rows],
        "mean_average_mAP": {k: round(v, 4) for k, v in summary.items()},
    }
    Path(out_path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    for variant, score in summary.items():
        click.echo(f"{variant:>10} {score:.4f}")


ALL_COMMANDS = [
    generate_command,
    train_command,
    infer_command,
    eval_command,
    gradcheck_command,
    sensitivity_dump_command,
    ablate_command,
]

__all__ = ["ALL_COMMANDS"]
