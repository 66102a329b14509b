"""
Orquestador de experimentos usando patrón Command y Facade
"""
import math
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .checkpoint import load_checkpoint, save_checkpoint
from .config import config
from .datasets import ingest, synthetic_shapes
from .errors import BenchmarkError, FlowError, OperatorError, ShapeError
from .flow_model import FlowModel, FlowModelFactory
from .imaging import save_comparison_strip, save_grid
from .metrics import psnr, ssim
from .models import BenchResult, ExperimentSpec, FlowConfig, ResultRow, SolveConfig, TrainConfig
from .operators import MeasurementOperator, OperatorFactory, default_hyperparameters, measure
from .results import aggregate, read_results, write_aggregate, write_bench, write_loss_curve, write_results
from .solver import solve
from .trainer import LoggingObserver, MetricsObserver, Trainer


class Command(ABC):
    """Interfaz Command para las operaciones del harness"""

    @abstractmethod
    def execute(self) -> Dict[str, Any]:
        """Ejecuta el comando"""
        pass


def load_images(image_shape: Sequence[int], data_dir: Optional[str] = None, synthetic: Optional[int] = None,
                seed: int = 0) -> Tuple[np.ndarray, List[str]]:
    """Imágenes uint8 N×C×H×W desde un directorio o del generador sintético"""
    channels, height, width = image_shape
    if data_dir is not None:
        result = ingest(data_dir, target=(height, width), channels=channels)
        return result.images, result.names
    if synthetic is None:
        raise ValueError("Se requiere un directorio de datos o un número de imágenes sintéticas")
    if height != width:
        raise ShapeError(f"Las imágenes sintéticas son cuadradas, forma pedida {height}×{width}")
    images = synthetic_shapes(synthetic, size=height, channels=channels, seed=seed)
    return images, [f"synthetic_{i:05d}" for i in range(synthetic)]


class TrainCommand(Command):
    """Entrena un flujo y escribe el checkpoint y la curva de pérdida"""

    def __init__(self, flow_config: FlowConfig, train_config: TrainConfig, dataset: np.ndarray,
                 checkpoint_path: Union[str, Path], loss_csv: Optional[Union[str, Path]] = None):
        self.flow_config = flow_config
        self.train_config = train_config
        self.dataset = dataset
        self.checkpoint_path = Path(checkpoint_path)
        self.loss_csv = Path(loss_csv) if loss_csv else self.checkpoint_path.with_suffix(".loss.csv")
        self.metrics = MetricsObserver()
        self.model = FlowModelFactory.build(flow_config, seed=train_config.seed)
        self.trainer = Trainer(self.model, train_config,
                               observers=[LoggingObserver(train_config.log_every), self.metrics])

    def execute(self) -> Dict[str, Any]:
        result = self.trainer.train(self.dataset)
        save_checkpoint(self.model, self.checkpoint_path)
        write_loss_curve(self.metrics.rows, self.loss_csv)
        return {
            "status": "stopped" if result.stopped_early else "success",
            "checkpoint": str(self.checkpoint_path),
            "loss_csv": str(self.loss_csv),
            "steps": result.steps,
            "epochs": result.epochs_completed,
            "final_loss": result.losses[-1] if result.losses else math.nan,
            "num_parameters": self.model.num_parameters,
        }


class SampleCommand(Command):
    """Rejilla de muestras: una fila por σ (ascendente), ``count`` columnas"""

    def __init__(self, model: FlowModel, sigmas: Sequence[float], count: int, out_path: Union[str, Path],
                 seed: int = 0):
        if count < 1:
            raise ValueError(f"count debe ser al menos 1, recibido {count}")
        if not sigmas:
            raise ValueError("Se requiere al menos un valor de sigma")
        self.model = model
        self.sigmas = sorted(float(s) for s in sigmas)
        self.count = count
        self.out_path = Path(out_path)
        self.seed = seed

    def execute(self) -> Dict[str, Any]:
        rows = []
        with self.model.frozen():
            for index, sigma in enumerate(self.sigmas):
                rows.append(self.model.sample(sigma, self.count, seed=[self.seed, index]))
                logger.debug(f"Fila {index}: σ={sigma:.2f}")
        save_grid(rows, self.out_path)
        logger.info(f"Rejilla de {len(rows)}×{self.count} muestras guardada en {self.out_path}")
        return {"status": "success", "rows": len(rows), "cols": self.count, "path": str(self.out_path)}


class SolveBatchCommand(Command):
    """Resuelve un batch de medidas y calcula las métricas por imagen"""

    def __init__(self, model: FlowModel, op: MeasurementOperator, spec: ExperimentSpec, solve_config: SolveConfig,
                 targets: np.ndarray, measurements: np.ndarray, indices: Sequence[int], names: Sequence[str]):
        self.model = model
        self.op = op
        self.spec = spec
        self.solve_config = solve_config
        self.targets = targets
        self.measurements = measurements
        self.indices = list(indices)
        self.names = list(names)

    def _row(self, name: str, psnr_value: float, ssim_value: float, data_loss: float,
             reg_loss: float, wall_time_ms: float) -> ResultRow:
        return ResultRow(task=self.spec.task, method=self.spec.method, image_id=name, psnr=psnr_value,
                         ssim=ssim_value, data_loss=data_loss, reg_loss=reg_loss, seed=self.spec.seed,
                         wall_time_ms=wall_time_ms)

    def _ssim(self, target: np.ndarray, restored: np.ndarray) -> float:
        try:
            return ssim(target, restored)
        except ShapeError as e:
            logger.debug(f"SSIM no disponible: {e}")
            return math.nan

    def execute(self) -> Dict[str, Any]:
        try:
            result = solve(self.model, self.op, self.measurements, self.solve_config, indices=self.indices)
        except FlowError as e:
            logger.error(f"Resolución abortada para las imágenes {self.indices[0]}..{self.indices[-1]}: {e}")
            rows = [self._row(name, math.nan, math.nan, math.nan, math.nan, math.nan) for name in self.names]
            return {"status": "error", "error": str(e), "indices": self.indices, "rows": rows, "x_hat": None}

        per_image_ms = 1000.0 * result.wall_time / len(self.indices)
        rows = []
        for k, name in enumerate(self.names):
            rows.append(self._row(
                name,
                psnr(self.targets[k], result.x_hat[k]),
                self._ssim(self.targets[k], result.x_hat[k]),
                float(result.final_data_loss[k]),
                float(result.final_reg_loss[k]),
                per_image_ms,
            ))
        return {"status": "success", "indices": self.indices, "rows": rows, "x_hat": result.x_hat}


class SolveCommand(Command):
    """Mide → resuelve → métricas para cada imagen; batches en paralelo con ``workers`` hilos"""

    def __init__(self, model: FlowModel, spec: ExperimentSpec, images: np.ndarray, names: Sequence[str]):
        if spec.method == "map" and spec.task != "denoise":
            raise OperatorError(f"El método map sólo admite la tarea denoise, recibida {spec.task}")
        self.model = model
        self.spec = spec
        count = min(spec.count, images.shape[0])
        if count < spec.count:
            logger.warning(f"Se pidieron {spec.count} imágenes, sólo hay {count}")
        self.images = images[:count]
        self.names = list(names)[:count]
        self.op = OperatorFactory.create(
            spec.task, model.config.image_shape, noise_std=spec.noise_std, noise_model=spec.noise_model,
            blur_padding=spec.blur_padding, mask_side=spec.mask_side,
        )
        self.solve_config = self.build_solve_config(spec)

    @staticmethod
    def build_solve_config(spec: ExperimentSpec) -> SolveConfig:
        params = default_hyperparameters(spec.task, spec.method)
        for key in ("alpha", "gamma", "beta", "noise_sigma", "lr"):
            value = getattr(spec, key)
            if value is not None:
                params[key] = value
        return SolveConfig(method=spec.method, iters=spec.iters, batch=spec.batch, seed=spec.seed, **params)

    def _batches(self, targets: np.ndarray, measurements: np.ndarray) -> List[SolveBatchCommand]:
        commands = []
        for start in range(0, len(self.names), self.spec.batch):
            stop = min(start + self.spec.batch, len(self.names))
            commands.append(SolveBatchCommand(
                self.model, self.op, self.spec, self.solve_config,
                targets[start:stop], measurements[start:stop], range(start, stop), self.names[start:stop],
            ))
        return commands

    def execute(self) -> Dict[str, Any]:
        spec = self.spec
        out_dir = Path(spec.out_dir)
        image_dir = out_dir / "images"
        targets = self.images.astype(self.model.dtype) / 255.0
        measurements = np.stack([measure(self.op, x, seed=[spec.seed, i]) for i, x in enumerate(targets)])
        logger.info(f"Resolviendo {spec.task}/{spec.method}: {len(self.names)} imágenes, "
                    f"{spec.workers} hilos, {self.solve_config.iters} iteraciones")
        if min(self.model.config.image_shape[1:]) < 11:
            logger.warning("Imágenes menores que la ventana SSIM 11×11: la columna ssim será NaN")

        start_time = time.time()
        outcomes = []
        with self.model.frozen(), ThreadPoolExecutor(max_workers=spec.workers) as executor:
            future_to_command = {executor.submit(c.execute): c for c in self._batches(targets, measurements)}
            for future in as_completed(future_to_command):
                outcomes.append(future.result())

        rows: Dict[int, ResultRow] = {}
        for outcome in outcomes:
            for k, index in enumerate(outcome["indices"]):
                rows[index] = outcome["rows"][k]
                if outcome["x_hat"] is not None:
                    save_comparison_strip(
                        targets[index], measurements[index], outcome["x_hat"][k],
                        image_dir / f"{spec.task}_{spec.method}_{self.names[index]}.png",
                    )
        ordered = [rows[i] for i in sorted(rows)]
        csv_path = write_results(ordered, out_dir / f"results_{spec.task}_{spec.method}.csv")

        failed = len([o for o in outcomes if o["status"] == "error"])
        elapsed = time.time() - start_time
        logger.info(f"Resolución completada - Batches: {len(outcomes)}, Fallidos: {failed}, Tiempo: {elapsed:.2f}s")
        return {
            "status": "success" if not failed else "partial",
            "csv": str(csv_path),
            "rows": ordered,
            "failed_batches": failed,
            "processing_time_seconds": elapsed,
        }


class EvalCommand(Command):
    """Agrega CSVs de resultados en la tabla media por (tarea, método)"""

    def __init__(self, inputs: Sequence[Union[str, Path]], out_path: Union[str, Path]):
        self.inputs = [Path(p) for p in inputs]
        self.out_path = Path(out_path)

    @staticmethod
    def expand(paths: Sequence[Union[str, Path]]) -> List[Path]:
        """Directorios → sus results_*.csv en orden lexicográfico"""
        files = []
        for path in map(Path, paths):
            files.extend(sorted(path.glob("results_*.csv")) if path.is_dir() else [path])
        return files

    def execute(self) -> Dict[str, Any]:
        files = self.expand(self.inputs)
        if not files:
            raise FileNotFoundError(f"No hay CSVs de resultados en {[str(p) for p in self.inputs]}")
        rows = [row for path in files for row in read_results(path)]
        table = aggregate(rows)
        write_aggregate(table, self.out_path)
        logger.info("=== RESULTADOS MEDIOS ===")
        for entry in table:
            logger.info(
                f"{entry['task']:<9} {entry['method']:<7} n={entry['count']:<4} "
                f"PSNR {entry['psnr_mean']:.2f} dB  SSIM {entry['ssim_mean']:.4f}  "
                f"(excluidas por PSNR infinito: {entry['excluded_infinite']})"
            )
        return {"status": "success", "files": [str(f) for f in files], "table": table, "path": str(self.out_path)}


def _bench_signature(model: FlowModel) -> Dict[str, Any]:
    flow = model.config
    return {
        "image_shape": tuple(flow.image_shape),
        "scale_shapes": [tuple(s) for s in flow.scale_shapes()],
        "scale_step_counts": flow.scale_step_counts(),
        "hidden_channels": flow.hidden_channels,
        "squeeze": flow.squeeze,
        "precision": flow.precision,
    }


class BenchCommand(Command):
    """Cronometra la pasada inversa (generación) de dos variantes con los mismos pasos"""

    def __init__(self, models: Sequence[FlowModel], runs: int, batch: int, out_path: Union[str, Path],
                 warmup: Optional[int] = None, seed: int = 0):
        if runs < 1:
            raise BenchmarkError(f"runs debe ser al menos 1, recibido {runs}")
        if batch < 1:
            raise BenchmarkError(f"batch debe ser al menos 1, recibido {batch}")
        steps = {m.num_flow_steps for m in models}
        if len(steps) != 1:
            raise BenchmarkError(f"Las variantes tienen distinto número de pasos de flujo: {sorted(steps)}")
        reference = _bench_signature(models[0])
        for model in models[1:]:
            for field, value in _bench_signature(model).items():
                if value != reference[field]:
                    raise BenchmarkError(f"Las variantes sólo pueden diferir en la permutación; "
                                         f"{field}: {reference[field]} != {value}")
        self.models = list(models)
        self.runs = runs
        self.batch = batch
        self.out_path = Path(out_path)
        self.warmup = config.bench_warmup if warmup is None else warmup
        self.seed = seed

    def _time(self, model: FlowModel) -> BenchResult:
        z = model.sample_latent(1.0, self.batch, seed=self.seed)
        timings = []
        with model.frozen():
            for _ in range(self.warmup):
                model.inverse(z)
            for _ in range(self.runs):
                start = time.perf_counter()
                model.inverse(z)
                timings.append(1000.0 * (time.perf_counter() - start))
        return BenchResult(
            variant=model.config.permutation_variant,
            runs=self.runs,
            batch=self.batch,
            mean_ms=float(np.mean(timings)),
            std_ms=float(np.std(timings)),
            num_parameters=model.num_parameters,
            flow_steps=model.num_flow_steps,
            timings_ms=timings,
        )

    def execute(self) -> Dict[str, Any]:
        results = []
        for model in self.models:
            result = self._time(model)
            logger.info(f"{result.variant}: {result.mean_ms:.2f} ± {result.std_ms:.2f} ms "
                        f"(batch {self.batch}, {self.runs} repeticiones, {result.num_parameters} parámetros)")
            results.append(result)
        write_bench(results, self.out_path)
        return {"status": "success", "results": results, "path": str(self.out_path)}


class ExperimentOrchestrator:
    """
    Orquestador principal que actúa como Facade para entrenamiento, muestreo,
    resolución, evaluación y benchmark
    """

    def __init__(self):
        self._train_command: Optional[TrainCommand] = None
        self._models: Dict[str, FlowModel] = {}

    def load_model(self, checkpoint: Union[str, Path]) -> FlowModel:
        key = str(Path(checkpoint).resolve())
        if key not in self._models:
            self._models[key] = load_checkpoint(checkpoint)
        return self._models[key]

    def request_stop(self) -> None:
        """Detiene el entrenamiento en curso tras el paso actual"""
        if self._train_command is not None:
            self._train_command.trainer.request_stop()

    def train(self, flow_config: FlowConfig, train_config: TrainConfig, checkpoint_path: Union[str, Path],
              data_dir: Optional[str] = None, synthetic: Optional[int] = None) -> Dict[str, Any]:
        images, _ = load_images(flow_config.image_shape, data_dir, synthetic, seed=train_config.seed)
        if images.shape[0] == 0:
            raise ValueError("El conjunto de entrenamiento está vacío")
        self._train_command = TrainCommand(flow_config, train_config, images, checkpoint_path)
        try:
            return self._train_command.execute()
        finally:
            self._train_command = None

    def sample(self, checkpoint: Union[str, Path], sigmas: Sequence[float], count: int,
               out_path: Union[str, Path], seed: int = 0) -> Dict[str, Any]:
        return SampleCommand(self.load_model(checkpoint), sigmas, count, out_path, seed).execute()

    def solve(self, spec: ExperimentSpec) -> Dict[str, Any]:
        model = self.load_model(spec.checkpoint)
        images, names = load_images(model.config.image_shape, spec.data_dir, spec.synthetic, seed=spec.seed)
        return SolveCommand(model, spec, images, names).execute()

    def evaluate(self, inputs: Sequence[Union[str, Path]], out_path: Union[str, Path]) -> Dict[str, Any]:
        return EvalCommand(inputs, out_path).execute()

    def bench(self, checkpoints: Sequence[Union[str, Path]], runs: int, batch: int, out_path: Union[str, Path],
              warmup: Optional[int] = None, seed: int = 0) -> Dict[str, Any]:
        models = [self.load_model(c) for c in checkpoints]
        return BenchCommand(models, runs, batch, out_path, warmup=warmup, seed=seed).execute()
