"""
Aplicación principal: CLI de entrenamiento, muestreo, resolución, evaluación y benchmark
"""
import argparse
import json
import signal
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

from .config import config
from .experiment_orchestrator import ExperimentOrchestrator
from .models import ExperimentSpec, FlowConfig, TrainConfig

PERMUTATIONS = {"coupling": "coupling_swap", "invconv": "invconv"}


def parse_sigmas(text: str) -> List[float]:
    """``inicio:fin:paso`` (fin incluido) o lista separada por comas"""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Rango de sigmas inválido: {text}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"Rango de sigmas inválido: {text}")
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(p) for p in text.split(",") if p.strip()]


class FlowApp:
    """Aplicación principal del motor de flujos"""

    def __init__(self):
        self.orchestrator = ExperimentOrchestrator()
        self._setup_logging()
        self._setup_signal_handlers()

    def _setup_logging(self) -> None:
        """Configura el sistema de logging"""
        logger.remove()

        log_format = (
            "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
            "<level>{level: <8}</level> | "
            "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
            "<level>{message}</level>"
        )

        logger.add(sys.stdout, format=log_format, level=config.log_level, colorize=True)
        logger.add(
            str(Path(config.log_dir) / config.log_file),
            format=log_format,
            level="DEBUG",
            rotation="1 day",
            retention="7 days",
            compression="zip",
        )

    def _setup_signal_handlers(self) -> None:
        """SIGINT/SIGTERM terminan el entrenamiento tras el paso en curso"""
        def signal_handler(signum, frame):
            logger.info(f"Señal {signum} recibida. Deteniendo tras el paso actual...")
            self.stop()

        signal.signal(signal.SIGINT, signal_handler)
        signal.signal(signal.SIGTERM, signal_handler)

    def stop(self) -> None:
        self.orchestrator.request_stop()

    def _train(self, args: argparse.Namespace) -> Dict[str, Any]:
        file_values: Dict[str, Any] = {}
        if args.config:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        flow_values = dict(file_values.get("flow", {}))
        train_values = dict(file_values.get("train", {}))

        overrides = {
            "num_scales": args.scales,
            "steps_per_scale": args.steps,
            "hidden_channels": args.hidden,
            "precision": args.precision,
        }
        if args.perm is not None:
            overrides["permutation_variant"] = PERMUTATIONS[args.perm]
        if args.size is not None or args.channels is not None:
            base = FlowConfig(**flow_values).image_shape
            overrides["image_shape"] = (
                args.channels if args.channels is not None else base[0],
                args.size if args.size is not None else base[1],
                args.size if args.size is not None else base[2],
            )
        flow_values.update({k: v for k, v in overrides.items() if v is not None})
        if args.scales is not None and "double_k_at" not in file_values.get("flow", {}):
            default_doubling = FlowConfig.model_fields["double_k_at"].get_default(call_default_factory=True)
            flow_values["double_k_at"] = [i for i in default_doubling if i < args.scales]
        train_values.update({k: v for k, v in {
            "epochs": args.epochs,
            "batch_size": args.batch,
            "learning_rate": args.lr,
            "seed": args.seed,
            "max_steps": args.max_steps,
        }.items() if v is not None})
        flow_values.setdefault("precision", config.default_precision)

        return self.orchestrator.train(
            FlowConfig(**flow_values), TrainConfig(**train_values), args.out,
            data_dir=args.data, synthetic=args.synthetic,
        )

    def _solve(self, args: argparse.Namespace) -> Dict[str, Any]:
        spec = ExperimentSpec(
            task=args.task, method=args.method, checkpoint=args.ckpt, data_dir=args.data,
            synthetic=args.synthetic, out_dir=args.out, count=args.count, seed=args.seed,
            workers=args.workers or config.workers, alpha=args.alpha, gamma=args.gamma, beta=args.beta,
            noise_sigma=args.noise_sigma, lr=args.lr, iters=args.iters, batch=args.batch,
            noise_std=args.noise_std, noise_model=args.noise_model, blur_padding=args.blur_padding,
            mask_side=args.mask_side,
        )
        return self.orchestrator.solve(spec)

    def run(self, args: argparse.Namespace) -> Dict[str, Any]:
        logger.info(f"Ejecutando comando {args.command}")
        if args.command == "train":
            result = self._train(args)
        elif args.command == "sample":
            result = self.orchestrator.sample(args.ckpt, parse_sigmas(args.sigmas), args.count, args.out, args.seed)
        elif args.command == "solve":
            result = self._solve(args)
        elif args.command == "eval":
            result = self.orchestrator.evaluate(args.inputs, args.out)
        elif args.command == "bench":
            result = self.orchestrator.bench([args.ckpt_a, args.ckpt_b], args.runs, args.batch, args.out,
                                             warmup=args.warmup, seed=args.seed)
        else:
            raise ValueError(f"Comando desconocido: {args.command}")
        logger.info(f"Comando {args.command} terminado con estado {result.get('status')}")
        return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Flujos normalizadores y problemas inversos en el espacio latente")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Entrena un flujo por máxima verosimilitud")
    source = train.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="Directorio de imágenes")
    source.add_argument("--synthetic", type=int, help="Número de imágenes sintéticas")
    train.add_argument("--out", required=True, help="Ruta del checkpoint")
    train.add_argument("--config", help="JSON con claves 'flow' y 'train'")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--seed", type=int)
    train.add_argument("--max-steps", type=int)
    train.add_argument("--scales", type=int)
    train.add_argument("--steps", type=int)
    train.add_argument("--hidden", type=int)
    train.add_argument("--perm", choices=sorted(PERMUTATIONS))
    train.add_argument("--precision", choices=["single", "double"])
    train.add_argument("--size", type=int, help="Lado de la imagen")
    train.add_argument("--channels", type=int, choices=[1, 3])

    sample = sub.add_parser("sample", help="Rejilla de muestras por temperatura σ")
    sample.add_argument("--ckpt", required=True)
    sample.add_argument("--sigmas", default="0:2:0.2")
    sample.add_argument("--count", type=int, default=16)
    sample.add_argument("--out", required=True)
    sample.add_argument("--seed", type=int, default=0)

    solve = sub.add_parser("solve", help="Resuelve un problema inverso por imagen")
    solve.add_argument("--ckpt", required=True)
    solve.add_argument("--task", required=True, choices=["denoise", "deblur", "inpaint", "colorize"])
    solve.add_argument("--method", required=True, choices=["ours", "csgm", "glowip", "map"])
    source = solve.add_mutually_exclusive_group(required=True)
    source.add_argument("--data")
    source.add_argument("--synthetic", type=int)
    solve.add_argument("--alpha", type=float)
    solve.add_argument("--gamma", type=float)
    solve.add_argument("--beta", type=float)
    solve.add_argument("--noise-sigma", type=float)
    solve.add_argument("--lr", type=float)
    solve.add_argument("--iters", type=int, default=1500)
    solve.add_argument("--count", type=int, default=192)
    solve.add_argument("--batch", type=int, default=32)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--workers", type=int)
    solve.add_argument("--noise-std", type=float, default=0.1)
    solve.add_argument("--noise-model", choices=["per_entry", "total_norm"], default="per_entry")
    solve.add_argument("--blur-padding", choices=["valid", "reflect"], default="valid")
    solve.add_argument("--mask-side", type=int)
    solve.add_argument("--out", required=True, help="Directorio de resultados")

    evaluate = sub.add_parser("eval", help="Agrega CSVs de resultados")
    evaluate.add_argument("--in", dest="inputs", nargs="+", required=True, help="CSVs o directorios")
    evaluate.add_argument("--out", required=True)

    bench = sub.add_parser("bench", help="Tiempo de generación de dos variantes")
    bench.add_argument("--ckpt-a", required=True)
    bench.add_argument("--ckpt-b", required=True)
    bench.add_argument("--runs", type=int, default=1500)
    bench.add_argument("--batch", type=int, default=128)
    bench.add_argument("--warmup", type=int)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", default="bench.csv")
    return parser


def main(argv: Optional[List[str]] = None) -> Dict[str, Any]:
    """Función principal"""
    args = build_parser().parse_args(argv)
    app = FlowApp()

    try:
        return app.run(args)
    except KeyboardInterrupt:
        logger.info("Interrupción por teclado recibida")
        return {"status": "interrupted"}
    except Exception as e:
        logger.error(f"Error fatal: {e}")
        sys.exit(1)
    finally:
        logger.info("Aplicación detenida")


if __name__ == "__main__":
    main()
