#!/usr/bin/env python3
"""
amalgam - CLI do pipeline de ofuscação: aumenta dataset e modelo, treina,
extrai o original, avalia, calcula o relatório de privacidade e roda ataques.
Cada invocação executa exatamente uma etapa.

Códigos de saída: 0 sucesso, 1 erro de uso, 2 erro de execução.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

# Adicionar diretório raiz ao path para imports absolutos
script_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(script_dir)
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.analysis.privacy_analyzer import parse_shape, report, tradeoff_curve
from src.attacks.attack_harness import (AttackConfig, dlg_reconstruct, idlg_label, run_paired_attack,
                                        victim_gradients)
from src.augment.data_augmenter import augment_dataset, load_dataset, save_dataset
from src.augment.model_augmenter import audit_isolation, augment_model, plan_subnets
from src.augment.noise import NOISE_KINDS, NoiseConfig
from src.augment.secret import SecretBundle, describe, load_secret, save_secret
from src.config import get_config
from src.errors import AmalgamError, ArgumentError, InternalError
from src.execution.trainer import TrainConfig, evaluate, train
from src.extractor import extract, validate_extraction
from src.ir.serialization import deserialize_model, serialize_model
from src.models import AVAILABLE_MODELS
from src.utils.file_utils import ensure_parent, generate_report, is_inside, short_hash
from src.utils.logger import setup_logging
from src.utils.plan_tree import save_plan_tree

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# flags que sobrescrevem chaves da configuração
CONFIG_FLAGS = {
    "alpha": "alpha", "subnets": "subnets", "cross_links": "cross_links", "noise": "noise",
    "noise_param": "noise_param", "seed": "seed", "epochs": "epochs", "lr": "lr", "batch": "batch",
    "deterministic": "deterministic", "workers": "workers", "iterations": "attack_iterations",
    "step": "attack_step", "cloud_dir": "cloud_dir",
}


class UsageError(Exception):
    """Erro de uso detectado após o parse (caminho ausente, segredo na nuvem...)"""


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        value = getattr(args, name, None)
        if value is None:
            raise UsageError(f"--{name.replace('_', '-')} é obrigatório para '{args.command}'")


def _require_existing(args: argparse.Namespace, *names: str) -> None:
    _require(args, *names)
    for name in names:
        path = getattr(args, name)
        if not Path(path).exists():
            raise UsageError(f"Arquivo de --{name.replace('_', '-')} não encontrado: {path}")


def _check_secret_location(args: argparse.Namespace, cfg: Dict[str, Any]) -> None:
    if args.secret is not None and args.cloud_dir is not None and is_inside(args.secret, cfg["cloud_dir"]):
        raise UsageError(f"O segredo ({args.secret}) não pode ficar dentro do diretório da nuvem ({cfg['cloud_dir']})")


def _check_cloud_output(args: argparse.Namespace, cfg: Dict[str, Any]) -> None:
    """Avisa quando um artefato público é gravado fora de --cloud-dir"""
    if args.out is not None and args.cloud_dir is not None and not is_inside(args.out, cfg["cloud_dir"]):
        logging.warning(f"--out {args.out} está fora de --cloud-dir {cfg['cloud_dir']}")


def _print_summary(title: str, data: Dict[str, Any]) -> None:
    print(f"== {title} ==")
    for key, value in data.items():
        print(f"{key}: {value}")


# ---------------------------------------------------------------------------
# Etapas
# ---------------------------------------------------------------------------

def cmd_make_dataset(args, cfg) -> Dict[str, Any]:
    _require(args, "model", "out")
    model = AVAILABLE_MODELS[args.model]()
    data = model.make_dataset(args.n, cfg["seed"])
    save_dataset(data, ensure_parent(args.out))
    return {"model": args.model, "samples": len(data), "shape": list(data.samples.shape), "out": args.out}


def cmd_init_model(args, cfg) -> Dict[str, Any]:
    _require(args, "model", "out")
    graph, params = AVAILABLE_MODELS[args.model]().build(cfg["seed"])
    structure, params_file = serialize_model(graph, params, args.out)
    return {"model": args.model, "params": params.numel(), "out": str(structure), "params_file": str(params_file)}


def cmd_augment_data(args, cfg) -> Dict[str, Any]:
    _require_existing(args, "data")
    _require(args, "secret", "out")
    _check_secret_location(args, cfg)
    _check_cloud_output(args, cfg)
    data = load_dataset(args.data)
    noise = NoiseConfig.from_config(cfg)
    position = None
    if args.reuse_secret:
        _require_existing(args, "secret")
        position = load_secret(args.secret).position
        logging.info(f"Reutilizando posições do segredo {args.secret}")
    augmented, position, stats = augment_dataset(data, cfg["alpha"], noise, cfg["seed"], position, cfg["workers"])
    save_dataset(augmented, ensure_parent(args.out))
    if not args.reuse_secret:
        bundle = SecretBundle(position, seeds={"augment": cfg["seed"], "noise": noise.seed, "data": cfg["seed"]})
        save_secret(bundle, args.secret, cfg["cloud_dir"] if args.cloud_dir else None)
    return {
        "alpha": cfg["alpha"],
        "shape": f"{list(data.samples.shape)} -> {list(augmented.samples.shape)}",
        "elapsed_s": round(stats.elapsed_s, 4),
        "original_bytes": stats.original_bytes,
        "augmented_bytes": stats.augmented_bytes,
        "out": args.out,
    }


def cmd_augment_model(args, cfg) -> Dict[str, Any]:
    _require_existing(args, "model", "secret")
    _require(args, "out")
    _check_secret_location(args, cfg)
    _check_cloud_output(args, cfg)
    graph, params = deserialize_model(args.model)
    bundle = load_secret(args.secret)
    noise = NoiseConfig.from_config(cfg)
    alpha = bundle.position.alpha if args.alpha is None else cfg["alpha"]
    plan = plan_subnets(graph, alpha, cfg["subnets"], cfg["seed"], cfg["cross_links"], noise)
    augmented, augmented_params, new_bundle = augment_model(graph, params, plan, bundle.position)
    offending = audit_isolation(augmented, new_bundle)
    if offending:
        raise InternalError(f"Auditoria de isolamento falhou: {offending[:3]}")
    new_bundle.seeds.setdefault("data", bundle.seeds.get("data", 0))
    structure, _ = serialize_model(augmented, augmented_params, args.out)
    save_secret(new_bundle, args.secret, cfg["cloud_dir"] if args.cloud_dir else None)
    if args.plan_tree:
        save_plan_tree(augmented, new_bundle, args.plan_tree, cfg["cloud_dir"] if args.cloud_dir else None)
    return {**plan.summary(), **describe(new_bundle), "out": str(structure)}


def cmd_train(args, cfg) -> Dict[str, Any]:
    _require_existing(args, "model", "data")
    _require(args, "out")
    graph, params = deserialize_model(args.model)
    data = load_dataset(args.data)
    train_cfg = TrainConfig.from_config(cfg)
    trained, log = train(graph, params, data, train_cfg)
    structure, _ = serialize_model(graph, trained, args.out)
    metrics_path = Path(args.metrics) if args.metrics else structure.with_suffix(".metrics.csv")
    log.save(ensure_parent(metrics_path))
    final = log.epoch_means().iloc[-1] if log.records else None
    return {
        "epochs": train_cfg.epochs,
        "steps": len(log.records),
        "final_loss_total": None if final is None else float(final["loss_total"]),
        "deterministic": train_cfg.deterministic,
        "out": str(structure),
        "metrics": str(metrics_path),
    }


def cmd_extract(args, cfg) -> Dict[str, Any]:
    _require_existing(args, "model", "original", "secret")
    _require(args, "out")
    augmented, augmented_params = deserialize_model(args.model)
    original, _ = deserialize_model(args.original)
    bundle = load_secret(args.secret)
    extracted, extract_report = extract(augmented, augmented_params, bundle, original)
    structure, _ = serialize_model(original, extracted, args.out)
    return {**extract_report.to_dict(), "architecture_sha256": short_hash(extract_report.architecture_sha256),
            "out": str(structure)}


def cmd_evaluate(args, cfg) -> Dict[str, Any]:
    _require_existing(args, "model", "data")
    graph, params = deserialize_model(args.model)
    data = load_dataset(args.data)
    if args.original is not None:
        # validação da extração: --model é M', --original é o modelo extraído
        _require_existing(args, "original", "secret")
        extracted_graph, extracted = deserialize_model(args.original)
        return validate_extraction(graph, params, load_secret(args.secret), extracted_graph, extracted, data)
    head = args.head
    if head is None:
        head = load_secret(args.secret).original_head_index if args.secret else 0
    loss, acc = evaluate(graph, params, data, head)
    return {"head": head, "loss": loss, "accuracy": acc, "samples": len(data)}


def cmd_report(args, cfg) -> Dict[str, Any]:
    _require(args, "shape")
    modality, channels, dims = parse_shape(args.shape)
    P = A_m = s = None
    if args.model is not None:
        _require_existing(args, "model")
        graph, _ = deserialize_model(args.model)
        plan = plan_subnets(graph, cfg["alpha"], cfg["subnets"], cfg["seed"], cfg["cross_links"])
        P, A_m, s = plan.original_count, plan.decoy_count, cfg["subnets"]
    privacy = report(modality, channels, dims, cfg["alpha"], P, A_m, s)
    for line in privacy.summary_lines():
        print(line)
    if args.curve:
        curve = tradeoff_curve(cfg["alpha_grid"], modality, channels, dims)
        curve.to_csv(ensure_parent(args.curve), index=False)
        logging.info(f"Curva de trade-off salva em {args.curve}")
    return privacy.to_dict()


def cmd_attack(args, cfg) -> Dict[str, Any]:
    _require_existing(args, "model", "data")
    attack_cfg = AttackConfig.from_config({**cfg, "target_index": args.index})
    model, params = deserialize_model(args.model)
    data = load_dataset(args.data)
    if not 0 <= args.index < len(data):
        raise ArgumentError(f"--index {args.index} fora de [0, {len(data)})")
    sample = data.samples.data[args.index]
    label = int(data.labels.data[args.index])

    if args.paired:
        _require_existing(args, "graph", "secret")
        augmented, augmented_params = deserialize_model(args.graph)
        position = load_secret(args.secret).position
        noise = NoiseConfig.from_config(cfg)
        augmented_sample, _, _ = augment_dataset(data.subset([args.index]), position.alpha, noise,
                                                 cfg["seed"], position)
        result = run_paired_attack(model, params, augmented, augmented_params, sample, augmented_sample.samples.data[0],
                                   label, attack_cfg, max(2, cfg["workers"]))
        return {
            "label": label,
            "plain": result["plain"].summary(),
            "augmented": result["augmented"].summary(),
            "plain_mse": result["plain_mse"],
            "augmented_mse": result["augmented_mse"],
            "mse_ratio": result["mse_ratio"],
        }

    grads = victim_gradients(model, params, sample, label)
    inferred = idlg_label(grads, model)
    summary = {"label": label, "inferred_label": inferred, "label_correct": inferred == label}
    if model.modality == "image":
        summary.update(dlg_reconstruct(model, params, grads, inferred, attack_cfg, ground_truth=sample).summary())
    return summary


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, Any]], Dict[str, Any]]] = {
    "augment-data": cmd_augment_data,
    "augment-model": cmd_augment_model,
    "train": cmd_train,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "attack": cmd_attack,
    "init-model": cmd_init_model,
    "make-dataset": cmd_make_dataset,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amalgam", description="Ofuscação de modelos e datasets por aumento")
    parser.add_argument("command", choices=sorted(COMMANDS), help="Etapa do pipeline a executar")

    aug = parser.add_argument_group("aumento")
    aug.add_argument("--alpha", type=float, help="Quantidade de aumento (>= 0)")
    aug.add_argument("--subnets", type=int, help="Número de sub-redes falsas")
    aug.add_argument("--cross-links", type=int, help="Ligações original -> falsa por sub-rede")
    aug.add_argument("--noise", choices=NOISE_KINDS, help="Distribuição do ruído")
    aug.add_argument("--noise-param", help="Escala do ruído (ou caminho do arquivo para --noise file)")
    aug.add_argument("--reuse-secret", action="store_true", help="Reutiliza as posições de --secret (splits de teste)")
    aug.add_argument("--plan-tree", help="Grava a árvore local do plano de aumento")

    tr = parser.add_argument_group("treino")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch", type=int)
    tr.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                    help="Modo determinístico (padrão) ou paralelo")
    tr.add_argument("--workers", type=int, help="Threads (augmentação e treino paralelo)")
    tr.add_argument("--metrics", help="CSV de métricas do treino")

    atk = parser.add_argument_group("ataque")
    atk.add_argument("--iterations", type=int, help="Iterações do DLG")
    atk.add_argument("--step", type=float, help="Passo inicial do DLG")
    atk.add_argument("--index", type=int, default=0, help="Índice da amostra atacada")
    atk.add_argument("--paired", action="store_true", help="Ataca o modelo simples e o aumentado (--graph)")

    io = parser.add_argument_group("arquivos")
    io.add_argument("--seed", type=int)
    io.add_argument("--model", help="Arquivo de modelo (ou nome do modelo de exemplo em init-model/make-dataset)")
    io.add_argument("--original", help="Modelo original (extract) ou extraído (evaluate)")
    io.add_argument("--graph", help="Modelo aumentado (attack --paired)")
    io.add_argument("--data", help="Dataset AMLG")
    io.add_argument("--secret", help="Segredo LOCAL (nunca dentro de --cloud-dir)")
    io.add_argument("--cloud-dir", help="Diretório cujo conteúdo pode sair da máquina")
    io.add_argument("--out", help="Arquivo de saída")
    io.add_argument("--shape", help="HxWxC (imagem) ou L (texto) para o relatório")
    io.add_argument("--curve", help="CSV da curva de trade-off (report)")
    io.add_argument("--head", type=int, help="Índice da saída avaliada")
    io.add_argument("--n", type=int, default=2000, help="Amostras do dataset de exemplo")
    io.add_argument("--json-out", help="Relatório JSON da etapa")
    io.add_argument("--log-file", help="Arquivo de log")
    return parser


def merge_config(args: argparse.Namespace) -> Dict[str, Any]:
    cfg = get_config()
    for flag, key in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    return cfg


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.log_file)
    cfg = merge_config(args)
    if args.command in ("init-model", "make-dataset") and args.model is None:
        args.model = cfg["default_model"]
    if args.command in ("init-model", "make-dataset") and args.model not in AVAILABLE_MODELS:
        logging.error(f"Modelo '{args.model}' desconhecido. Opções: {', '.join(AVAILABLE_MODELS)}")
        return EXIT_USAGE

    logging.info(f"=== amalgam {args.command} ===")
    try:
        result = COMMANDS[args.command](args, cfg)
    except UsageError as e:
        logging.error(f"Erro de uso: {e}")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (AmalgamError, OSError, ValueError, KeyError) as e:
        logging.error(f"Erro em '{args.command}': {e}")
        return EXIT_RUNTIME

    if args.command != "report":
        _print_summary(args.command, result)
    if args.json_out:
        generate_report({"command": args.command, "result": result}, cfg, args.json_out)
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
