"""
Persistencia CSV de resultados: filas por imagen, tabla agregada, curva de pérdida y tiempos

Todos los CSV van en UTF-8, con cabecera, orden de columnas fijo y saltos de línea LF.
"""
import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .models import BenchResult, ResultRow

RESULT_FIELDS: List[str] = list(ResultRow.model_fields)
AGGREGATE_FIELDS = ["task", "method", "count", "psnr_mean", "ssim_mean", "excluded_infinite"]
LOSS_FIELDS = ["step", "epoch", "loss", "bits_per_dim"]
BENCH_FIELDS = ["variant", "runs", "batch", "mean_ms", "std_ms", "num_parameters", "flow_steps"]


def write_csv(path: Union[str, Path], fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})
    return path


def write_results(rows: Sequence[ResultRow], path: Union[str, Path]) -> Path:
    path = write_csv(path, RESULT_FIELDS, (row.model_dump() for row in rows))
    logger.info(f"{len(rows)} filas de resultados escritas en {path}")
    return path


def read_results(path: Union[str, Path]) -> List[ResultRow]:
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != RESULT_FIELDS:
            raise ValueError(f"{path}: cabecera {reader.fieldnames} distinta de {RESULT_FIELDS}")
        return [ResultRow(**row) for row in reader]


def aggregate(rows: Iterable[ResultRow]) -> List[Dict[str, Any]]:
    """
    Media de PSNR/SSIM por (tarea, método).

    Las filas con PSNR infinito se excluyen y se cuentan en ``excluded_infinite``;
    las de resolución abortada (NaN) se excluyen con un warning.
    """
    groups: Dict[Tuple[str, str], List[ResultRow]] = defaultdict(list)
    for row in rows:
        groups[(row.task, row.method)].append(row)

    table = []
    for (task, method), members in sorted(groups.items()):
        infinite = [r for r in members if math.isinf(r.psnr)]
        aborted = [r for r in members if math.isnan(r.psnr)]
        kept = [r for r in members if math.isfinite(r.psnr)]
        if infinite:
            logger.warning(f"{task}/{method}: {len(infinite)} filas con PSNR infinito excluidas de la media")
        if aborted:
            logger.warning(f"{task}/{method}: {len(aborted)} filas abortadas (NaN) excluidas de la media")
        ssim_values = [r.ssim for r in kept if math.isfinite(r.ssim)]
        table.append({
            "task": task,
            "method": method,
            "count": len(kept),
            "psnr_mean": float(np.mean([r.psnr for r in kept])) if kept else math.nan,
            "ssim_mean": float(np.mean(ssim_values)) if ssim_values else math.nan,
            "excluded_infinite": len(infinite),
        })
    return table


def write_aggregate(table: Sequence[Dict[str, Any]], path: Union[str, Path]) -> Path:
    return write_csv(path, AGGREGATE_FIELDS, table)


def write_loss_curve(rows: Sequence[Dict[str, Any]], path: Union[str, Path]) -> Path:
    return write_csv(path, LOSS_FIELDS, rows)


def write_bench(results: Sequence[BenchResult], path: Union[str, Path]) -> Path:
    return write_csv(path, BENCH_FIELDS, (r.model_dump() for r in results))
