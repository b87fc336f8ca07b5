"""Command-line front end.

Seven sub-commands, each a thin orchestration over one module: ``ingest``,
``train``, ``certify``, ``attack``, ``evaluate``, ``ablate`` and
``report``.  Every run writes a provenance block (config hash, seeds,
library versions) into its output directory so results can be reproduced
exactly.

Exit codes: 0 success, 2 configuration/schema errors, 3 runtime failures.
Schema violations emit a machine-readable JSON report on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_seed
from .attacks import AttackConfig, ShadowConfig, ghostcert, shadow_attack, shadow_attack_bounded
from .config import (
    ConfigError,
    DATA_ROOT_ENV,
    apply_profile,
    config_hash,
    load_config,
    resolve_data_path,
)
from .datasets import ImageDataset, ingest_dataset, synthetic_shapes
from .evaluation import (
    Defense,
    GridSpec,
    RecordStore,
    run_ablation,
    run_grid,
    summarize_records,
    write_summary_csv,
)
from .models import (
    Ensemble,
    TrainingConfig,
    compose_denoised,
    load_checkpoint,
    save_checkpoint,
    train_denoiser,
    train_noise_augmented,
)
from .plotting import plot_attack_panels, plot_metric_vs_epsilon, plot_radius_vs_epsilon
from .smoothing import SmoothingConfig, certify
from .evaluation import build_attack_mask, pick_target_label, scaled_epsilon

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _library_versions() -> dict[str, str]:
    import matplotlib
    import scipy
    import torch

    return {
        "certspoof": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "torch": torch.__version__,
        "matplotlib": matplotlib.__version__,
    }


def _write_provenance(out: Path, command: str, document: dict, seed: int) -> None:
    block = {
        "command": command,
        "config_sha256": config_hash(document),
        "config": document,
        "seed": seed,
        "versions": _library_versions(),
    }
    (out / "provenance.json").write_text(
        json.dumps(block, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _build_dataset(document: dict, role: str, master_seed: int) -> ImageDataset:
    data = document.get("data")
    if data is None:
        raise ConfigError("this command needs a 'data' section")
    if data["kind"] == "synthetic":
        shape = tuple(data.get("shape", [32, 32, 3]))
        count = data.get("train_count", 3000) if role == "train" else data.get("eval_count", 300)
        seed = derive_seed(data.get("seed", master_seed), "dataset", role)
        return synthetic_shapes(
            count, shape=shape, num_classes=data.get("num_classes", 8),
            seed=seed, contrast=data.get("contrast", 0.35), name=f"synthetic-{role}",
        )
    path = resolve_data_path(data["path"])
    return ingest_dataset(path, data["format"])


def _smoothing_from(section: dict, profile_values: dict) -> SmoothingConfig:
    return SmoothingConfig(
        sigma=section["sigma"],
        n0=section.get("n0", profile_values["n0"]),
        n=section.get("n", profile_values["n"]),
        alpha=section.get("alpha", profile_values["alpha"]),
        mu=section.get("mu", 0.0),
    )


def _defense_from_ref(ref: dict, profile_values: dict) -> Defense:
    classifier = load_checkpoint(resolve_data_path(ref["checkpoint"]))
    smoothing = SmoothingConfig(
        sigma=ref["sigma"], n0=profile_values["n0"], n=profile_values["n"],
        alpha=profile_values["alpha"],
    )
    return Defense(kind=ref["kind"], classifier=classifier, smoothing=smoothing,
                   label=ref.get("label", ""))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_ingest(document: dict, out: Path, seed: int) -> int:
    data = document.get("data")
    if data is None or data.get("kind") != "ingest":
        raise ConfigError("ingest needs a 'data' section with kind='ingest'")
    dataset = ingest_dataset(resolve_data_path(data["path"]), data["format"], manifest_dir=out)
    print(f"ingested {len(dataset)} images of shape {dataset.image_shape} "
          f"({dataset.num_classes} classes)")
    return EXIT_OK


def _cmd_train(document: dict, out: Path, seed: int) -> int:
    section = document.get("train")
    if section is None:
        raise ConfigError("train needs a 'train' section")
    dataset = _build_dataset(document, "train", seed)
    sigma = section["sigma"]
    epochs = section.get("epochs", 5)
    base_cfg = dict(
        epochs=epochs, batch_size=section.get("batch_size", 64),
        learning_rate=section.get("learning_rate", 1e-3),
    )
    kind = section["defense"]
    reports: dict = {}
    if kind == "single":
        model = train_noise_augmented(dataset, TrainingConfig(
            sigma=sigma, seed=derive_seed(seed, "train", "single"), **base_cfg))
        reports["single"] = asdict(model.training_report)
    elif kind == "ensemble":
        members = []
        for i in range(section.get("ensemble_size", 3)):
            member = train_noise_augmented(dataset, TrainingConfig(
                sigma=sigma, seed=derive_seed(seed, "train", "member", i), **base_cfg))
            reports[f"member{i}"] = asdict(member.training_report)
            members.append(member)
        model = Ensemble(members)
    else:  # denoised: clean-trained base behind a sigma-matched denoiser
        base = train_noise_augmented(dataset, TrainingConfig(
            sigma=0.0, seed=derive_seed(seed, "train", "base"), **base_cfg))
        reports["base"] = asdict(base.training_report)
        denoiser = train_denoiser(dataset, TrainingConfig(
            sigma=sigma, seed=derive_seed(seed, "train", "denoiser"),
            epochs=section.get("denoiser_epochs", epochs),
            batch_size=base_cfg["batch_size"], learning_rate=base_cfg["learning_rate"]))
        reports["denoiser"] = asdict(denoiser.training_report)
        model = compose_denoised(base, denoiser)
    checkpoint = out / section.get("checkpoint", f"{kind}-sigma{sigma:g}.npz")
    save_checkpoint(model, checkpoint)
    (out / "training_report.json").write_text(
        json.dumps(reports, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"saved {kind} checkpoint to {checkpoint}")
    return EXIT_OK


def _cmd_certify(document: dict, out: Path, seed: int, profile: str) -> int:
    section = document.get("certify")
    if section is None:
        raise ConfigError("certify needs a 'certify' section")
    profile_values = apply_profile({}, profile)
    smoothing = _smoothing_from(section, profile_values)
    classifier = load_checkpoint(resolve_data_path(section["checkpoint"]))
    dataset = _build_dataset(document, "eval", seed)
    count = min(section.get("count", 10), len(dataset))
    rows = []
    for index in range(count):
        cert_seed = derive_seed(seed, "certify", dataset.image_id(index))
        outcome = certify(classifier, dataset.images[index], smoothing, cert_seed)
        rows.append({
            "image_id": dataset.image_id(index),
            "label": int(dataset.labels[index]),
            "decision": outcome.decision,
            "radius": outcome.radius,
            "pa_lower": outcome.pa_lower,
            "seed": cert_seed,
        })
    path = out / "certify.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    certified = sum(r["decision"] == r["label"] for r in rows)
    print(f"certified {certified}/{count} images as their label -> {path}")
    return EXIT_OK


def _cmd_attack(document: dict, out: Path, seed: int, profile: str) -> int:
    section = document.get("attack")
    if section is None:
        raise ConfigError("attack needs an 'attack' section")
    profile_values = apply_profile({}, profile)
    classifier = load_checkpoint(resolve_data_path(section["checkpoint"]))
    dataset = _build_dataset(document, "eval", seed)
    index = section.get("index", 0)
    if index >= len(dataset):
        raise ConfigError(f"attack index {index} outside dataset of {len(dataset)} images")
    x = dataset.images[index]
    label = int(dataset.labels[index])
    sigma = section["sigma"]
    targeted = section.get("targeted", False)
    target = pick_target_label(dataset, index) if targeted else None
    attack_label = target if targeted else label
    eps_ref = section["epsilon"]
    eps = (eps_ref if section.get("epsilon_scale", "paper224") == "raw"
           else scaled_epsilon(eps_ref, x.shape))
    steps = section.get("steps", profile_values["steps"])
    noise_batch = section.get("noise_batch", profile_values["noise_batch"])
    step_size = section.get("step_size") or 2.5 * eps / max(steps, 1)
    kind = section.get("attack", "ghostcert")
    attack_seed = derive_seed(seed, "attack", dataset.image_id(index), kind)
    if kind == "ghostcert":
        defense = Defense(kind="single", classifier=classifier,
                          smoothing=_smoothing_from(section, profile_values))
        mask = build_attack_mask(
            defense, x,
            target if (targeted and section.get("saliency_on", "source") == "target") else label,
            section.get("mask_strategy", "saliency"), section.get("k", 5),
            derive_seed(seed, "mask", dataset.image_id(index)),
        )
        cfg = AttackConfig(epsilon=eps, step_size=step_size, steps=steps,
                           noise_batch=noise_batch, sigma=sigma, targeted=targeted,
                           target_label=target, seed=attack_seed)
        result = ghostcert(classifier, x, attack_label, mask, cfg)
        mask_area = mask.area
    else:
        cfg = ShadowConfig(step_size=step_size, steps=steps, noise_batch=noise_batch,
                           sigma=sigma, targeted=targeted, target_label=target,
                           l2_bound=eps if kind == "shadow_bounded" else None,
                           seed=attack_seed)
        attack_fn = shadow_attack_bounded if kind == "shadow_bounded" else shadow_attack
        result = attack_fn(classifier, x, attack_label, cfg)
        mask_area = None
    smoothing = _smoothing_from(section, profile_values)
    cert_seed = derive_seed(seed, "postcert", dataset.image_id(index), kind)
    outcome = certify(classifier, result.adversarial, smoothing, cert_seed)
    np.save(out / "delta.npy", result.delta)
    np.save(out / "adversarial.npy", result.adversarial)
    plot_attack_panels(x, result.adversarial, result.delta, out / "panels.png",
                       captions=(f"source (label {label})",
                                 f"adversarial (certified {outcome.decision})"))
    summary = {
        "image_id": dataset.image_id(index),
        "attack": kind,
        "targeted": targeted,
        "source_label": label,
        "target_label": target,
        "epsilon_pixel": eps,
        "delta_l2": result.l2_norm,
        "delta_linf": result.linf_norm,
        "delta_tv": result.total_variation,
        "mask_area": mask_area,
        "zero_gradient_steps": len(result.zero_gradient_steps),
        "post_decision": outcome.decision,
        "post_radius": outcome.radius,
        "post_pa_lower": outcome.pa_lower,
        "seeds": {"attack": attack_seed, "certify": cert_seed},
    }
    (out / "attack_result.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"attack {kind}: decision {label} -> {outcome.decision}, "
          f"radius {outcome.radius:.4f}, |delta|_2 = {result.l2_norm:.4f}")
    return EXIT_OK


def _grid_spec_from(section: dict, profile: str, seed: int,
                    targeted_default: bool = False) -> GridSpec:
    values = apply_profile(section, profile)
    return GridSpec(
        epsilons=tuple(values["epsilons"]),
        attack_kinds=tuple(values.get("attacks", ("ghostcert", "shadow", "shadow_bounded"))),
        targeted=values.get("targeted", targeted_default),
        images_per_cell=values["images_per_cell"],
        mask_strategy=values.get("mask_strategy", "saliency"),
        mask_k=values.get("k", 5),
        saliency_on=values.get("saliency_on", "source"),
        epsilon_scale=values.get("epsilon_scale", "paper224"),
        steps=values["steps"],
        noise_batch=values["noise_batch"],
        step_size=values.get("step_size"),
        master_seed=seed,
    )


def _prepare_store(out: Path, resume: bool) -> RecordStore:
    store = RecordStore(out / "records")
    if len(store) and not resume:
        raise ConfigError(
            f"record store {store.directory} already holds {len(store)} trials; "
            "pass --resume to continue"
        )
    return store


def _cmd_evaluate(document: dict, out: Path, seed: int, profile: str, resume: bool) -> int:
    section = document.get("evaluate")
    if section is None:
        raise ConfigError("evaluate needs an 'evaluate' section")
    profile_values = apply_profile(section, profile)
    defenses = [_defense_from_ref(ref, profile_values) for ref in section["defenses"]]
    dataset = _build_dataset(document, "eval", seed)
    spec = _grid_spec_from(section, profile, seed)
    store = _prepare_store(out, resume)
    records, summaries = run_grid(defenses, dataset, spec, store)
    write_summary_csv(summaries, out / "summaries.csv")
    print(f"{len(records)} trials across {len(summaries)} cells -> {out / 'summaries.csv'}")
    return EXIT_OK


def _cmd_ablate(document: dict, out: Path, seed: int, profile: str, resume: bool) -> int:
    section = document.get("ablate")
    if section is None:
        raise ConfigError("ablate needs an 'ablate' section")
    profile_values = apply_profile(section, profile)
    defenses = [_defense_from_ref(ref, profile_values) for ref in section["defenses"]]
    dataset = _build_dataset(document, "eval", seed)
    spec = _grid_spec_from(section, profile, seed, targeted_default=True)
    store = _prepare_store(out, resume)
    records, summaries = run_ablation(
        section["kind"], defenses, dataset, spec, store,
        ks=tuple(section.get("ks", (3, 5, 7))),
    )
    write_summary_csv(summaries, out / "summaries.csv")
    print(f"{len(records)} ablation trials across {len(summaries)} cells")
    return EXIT_OK


def _cmd_report(document: dict, out: Path, seed: int) -> int:
    section = document.get("report")
    if section is None:
        raise ConfigError("report needs a 'report' section")
    store = RecordStore(resolve_data_path(section["records"]))
    records = store.load_records()
    if not records:
        raise ConfigError(f"no records found under {store.directory}")
    summaries = summarize_records(records)
    write_summary_csv(summaries, out / "summaries.csv")
    untargeted = [s for s in summaries if not s.targeted]
    targeted = [s for s in summaries if s.targeted]
    if untargeted:
        plot_metric_vs_epsilon(untargeted, out / "asr_untargeted.png", "asr",
                               title="untargeted attack success rate")
        plot_radius_vs_epsilon(untargeted, out / "radius_untargeted.png",
                               title="untargeted spoofing radius")
    if targeted:
        plot_metric_vs_epsilon(targeted, out / "asr_targeted.png", "asr",
                               title="targeted attack success rate")
        plot_metric_vs_epsilon(targeted, out / "dos_targeted.png", "dos",
                               title="denial-of-service (abstain) rate")
        plot_radius_vs_epsilon(targeted, out / "radius_targeted.png",
                               title="targeted spoofing radius")
    panels = section.get("panels", 0)
    if panels:
        dataset = _build_dataset(document, "eval", seed)
        amplification = section.get("panel_amplification", 5.0)
        shown = 0
        for record in records:
            if shown >= panels:
                break
            if not record.succeeded or record.adversarial_file is None:
                continue
            adversarial = store.load_adversarial(record)
            x = dataset.images[record.image_index]
            plot_attack_panels(
                x, adversarial, adversarial - x,
                out / f"panel_{shown}_{record.trial_id}.png",
                amplification=amplification,
                captions=(f"source (label {record.source_label}, r={record.source_radius:.2f})",
                          f"adversarial (certified {record.post_decision}, r={record.post_radius:.2f})"),
            )
            shown += 1
    print(f"report written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="certspoof",
        description="randomized-smoothing certification and certificate-spoofing workbench",
        epilog=f"relative data paths resolve against ${DATA_ROOT_ENV} when set",
    )
    parser.add_argument("command", choices=[
        "ingest", "train", "certify", "attack", "evaluate", "ablate", "report",
    ])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--profile", choices=["full", "fast"], default=None,
                        help="override the config's profile")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", required=True, help="output directory (owned by this run)")
    parser.add_argument("--resume", action="store_true",
                        help="continue a partially written record store")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        document = load_config(args.config)
        profile = args.profile or document.get("profile", "full")
        seed = args.seed if args.seed is not None else document.get("seed", 0)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_provenance(out, args.command, document, seed)
        if args.command == "ingest":
            return _cmd_ingest(document, out, seed)
        if args.command == "train":
            return _cmd_train(document, out, seed)
        if args.command == "certify":
            return _cmd_certify(document, out, seed, profile)
        if args.command == "attack":
            return _cmd_attack(document, out, seed, profile)
        if args.command == "evaluate":
            return _cmd_evaluate(document, out, seed, profile, args.resume)
        if args.command == "ablate":
            return _cmd_ablate(document, out, seed, profile, args.resume)
        if args.command == "report":
            return _cmd_report(document, out, seed)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(json.dumps(exc.report, sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 3 by contract
        print(json.dumps({"error": "runtime", "type": type(exc).__name__,
                          "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
