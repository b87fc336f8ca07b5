"""Evaluation harness: eligible-image selection, attack/certify trials,
metrics, grids and ablations.

A trial attacks one eligible image under one (defense, sigma, epsilon,
attack) cell and re-certifies the adversarial image.  Trials are recorded
as newline-delimited JSON with the adversarial image stored alongside as
.npy, so every reported spoofing radius can be re-derived by
re-certifying the stored image with the stored seed.  Grids resume from a
partially written record store without re-running completed trials.

Per-trial seeds are stable hashes of the master seed with the image id
and the seed-relevant cell coordinates (sigma, epsilon, attack kind,
targeted flag).  The mask-construction seed depends on the image only, so
ablation strategies compare under identical randomness.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .attacks import (
    AttackConfig,
    AttackResult,
    ShadowConfig,
    ghostcert,
    shadow_attack,
    shadow_attack_bounded,
    total_variation,
)
from .models import Classifier
from .saliency_mask import (
    SalientRegionMask,
    full_frame_mask,
    propose_regions,
    random_pixel_mask,
    random_region_mask,
    saliency_for,
    select_salient_region_mask,
)
from .smoothing import ABSTAIN, SmoothingConfig, certify

__all__ = [
    "RECORD_SCHEMA_VERSION",
    "PAPER_PIXEL_COUNT",
    "Defense",
    "EligibleImage",
    "TrialRecord",
    "MetricsSummary",
    "GridSpec",
    "RecordStore",
    "scaled_epsilon",
    "select_eligible_images",
    "pick_target_label",
    "build_attack_mask",
    "run_trial",
    "run_grid",
    "run_ablation",
    "asr_untargeted",
    "asr_untargeted_strict",
    "asr_targeted",
    "dos_rate",
    "mean_spoofing_radius",
    "imperceptibility_metrics",
    "outcome_counts",
    "summarize_cell",
    "summarize_records",
    "write_summary_csv",
]

RECORD_SCHEMA_VERSION = 1

# reference frame in which perturbation budgets are quoted: 224x224 RGB
PAPER_PIXEL_COUNT = 224 * 224 * 3

ATTACK_KINDS = ("ghostcert", "shadow", "shadow_bounded")
MASK_STRATEGIES = ("saliency", "random_pixel", "random_region", "full")


def scaled_epsilon(eps_reference: float, image_shape: tuple[int, int, int]) -> float:
    """Rescale a budget quoted at 224x224x3 to this image's pixel count so
    per-pixel distortion is comparable."""
    return float(eps_reference) * float(
        np.sqrt(int(np.prod(image_shape)) / PAPER_PIXEL_COUNT)
    )


@dataclass(frozen=True)
class Defense:
    """A certified defense: base classifier plus smoothing parameters.

    ``kind`` names the construction (single / ensemble / denoised); the
    attack and the verifier both operate on ``classifier``.
    """

    kind: str
    classifier: Classifier
    smoothing: SmoothingConfig
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("single", "ensemble", "denoised"):
            raise ValueError(f"unknown defense kind {self.kind!r}")

    @property
    def name(self) -> str:
        return self.label or f"{self.kind}-sigma{self.smoothing.sigma:g}"


@dataclass(frozen=True)
class EligibleImage:
    index: int
    image_id: str
    label: int
    source_decision: int
    source_radius: float
    source_pa_lower: float
    cert_seed: int


@dataclass
class TrialRecord:
    """One attacked image: identifiers, seeds, outcomes and norms."""

    schema_version: int
    trial_id: str
    cell_id: str
    image_id: str
    image_index: int
    defense_kind: str
    defense_name: str
    sigma: float
    eps_reference: float | None
    eps_pixel: float | None
    attack_kind: str
    targeted: bool
    mask_strategy: str | None
    mask_k: int | None
    mask_area: int | None
    source_label: int
    target_label: int | None
    source_decision: int
    source_radius: float
    post_decision: int | None
    post_radius: float | None
    post_pa_lower: float | None
    delta_l2: float | None
    delta_linf: float | None
    delta_tv: float | None
    zero_gradient_steps: int
    attack_seed: int
    cert_seed: int
    mask_seed: int
    adversarial_file: str | None
    wall_time_s: float
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        payload = json.loads(line)
        version = payload.get("schema_version")
        if version != RECORD_SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema version {version}")
        return cls(**payload)

    @property
    def succeeded(self) -> bool:
        """Attack success under the cell's own criterion."""
        if self.status != "ok" or self.post_decision is None:
            return False
        if self.targeted:
            return self.post_decision == self.target_label
        return self.post_decision != self.source_label


class RecordStore:
    """Append-only JSONL store with .npy adversarial sidecars; resumable."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.records_path = self.directory / "records.jsonl"
        self.adversarial_dir = self.directory / "adversarial"
        self.adversarial_dir.mkdir(exist_ok=True)
        self._known: set[str] = {r.trial_id for r in self.load_records()}

    def __contains__(self, trial_id: str) -> bool:
        return trial_id in self._known

    def __len__(self) -> int:
        return len(self._known)

    def append(self, record: TrialRecord, adversarial: np.ndarray | None) -> None:
        if record.trial_id in self._known:
            raise ValueError(f"trial {record.trial_id} already recorded")
        if adversarial is not None:
            path = self.adversarial_dir / f"{record.trial_id}.npy"
            np.save(path, adversarial)
            record.adversarial_file = str(path.relative_to(self.directory))
        with open(self.records_path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
        self._known.add(record.trial_id)

    def load_records(self) -> list[TrialRecord]:
        if not self.records_path.exists():
            return []
        with open(self.records_path, "r", encoding="utf-8") as fh:
            return [TrialRecord.from_json(line) for line in fh if line.strip()]

    def load_adversarial(self, record: TrialRecord) -> np.ndarray:
        if record.adversarial_file is None:
            raise ValueError(f"trial {record.trial_id} stored no adversarial image")
        return np.load(self.directory / record.adversarial_file)


# ---------------------------------------------------------------------------
# Protocol pieces
# ---------------------------------------------------------------------------


def select_eligible_images(dataset, defense: Defense, count: int,
                           master_seed: int = 0) -> list[EligibleImage]:
    """First ``count`` images (in index order) that the defense certifies
    as their true label; records each source radius.

    Warns and returns fewer when the split runs out.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    eligible: list[EligibleImage] = []
    for index in range(len(dataset)):
        if len(eligible) >= count:
            break
        image_id = dataset.image_id(index)
        cert_seed = derive_seed(master_seed, "select", defense.name, image_id)
        outcome = certify(defense.classifier, dataset.images[index], defense.smoothing, cert_seed)
        if outcome.decision == int(dataset.labels[index]):
            eligible.append(EligibleImage(
                index=index,
                image_id=image_id,
                label=int(dataset.labels[index]),
                source_decision=outcome.decision,
                source_radius=outcome.radius,
                source_pa_lower=outcome.pa_lower,
                cert_seed=cert_seed,
            ))
    if len(eligible) < count:
        warnings.warn(
            f"dataset exhausted: found {len(eligible)} eligible images, wanted {count}",
            stacklevel=2,
        )
    return eligible


def pick_target_label(dataset, source_index: int) -> int:
    """Label of the first following image (wrapping) with a different label."""
    n = len(dataset)
    source_label = int(dataset.labels[source_index])
    for offset in range(1, n):
        candidate = int(dataset.labels[(source_index + offset) % n])
        if candidate != source_label:
            return candidate
    raise ValueError("all dataset labels are identical; no target exists")


def build_attack_mask(defense: Defense, x: np.ndarray, saliency_label: int,
                      strategy: str, k: int, mask_seed: int,
                      min_area: int | None = None) -> SalientRegionMask:
    """Mask for a masked attack under one of the ablation strategies."""
    if strategy == "full":
        return full_frame_mask(x.shape[:2])
    if strategy == "random_pixel":
        return random_pixel_mask(x.shape[:2], 0.5, mask_seed)
    props = propose_regions(x, min_area=min_area)
    if strategy == "random_region":
        if len(props) == 0:
            return full_frame_mask(x.shape[:2])
        return random_region_mask(props, k, mask_seed)
    if strategy == "saliency":
        smap = saliency_for(defense.classifier, x, saliency_label)
        return select_salient_region_mask(props, smap, k=k)
    raise ValueError(f"unknown mask strategy {strategy!r}")


@dataclass(frozen=True)
class GridSpec:
    """One evaluation grid: budgets x attacks against a set of defenses.

    ``epsilons`` are quoted in the 224x224x3 reference frame and rescaled
    per image unless ``epsilon_scale`` is "raw".  ``step_size`` None picks
    2.5 * epsilon / steps per cell; unbounded shadow runs always use
    ``shadow_step_size``.
    """

    epsilons: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)
    attack_kinds: tuple[str, ...] = ("ghostcert", "shadow", "shadow_bounded")
    targeted: bool = False
    images_per_cell: int = 100
    mask_strategy: str = "saliency"
    mask_k: int = 5
    saliency_on: str = "source"           # or "target" for targeted attacks
    epsilon_scale: str = "paper224"       # or "raw"
    steps: int = 100
    noise_batch: int = 32
    step_size: float | None = None
    shadow_step_size: float = 0.05
    shadow_tv_weight: float = 0.3
    shadow_color_mean_weight: float = 1.0
    shadow_channel_sim_weight: float = 0.5
    master_seed: int = 0

    def __post_init__(self):
        unknown = set(self.attack_kinds) - set(ATTACK_KINDS)
        if unknown:
            raise ValueError(f"unknown attack kinds {sorted(unknown)}")
        if self.mask_strategy not in MASK_STRATEGIES:
            raise ValueError(f"unknown mask strategy {self.mask_strategy!r}")
        if self.saliency_on not in ("source", "target"):
            raise ValueError("saliency_on must be 'source' or 'target'")
        if self.epsilon_scale not in ("paper224", "raw"):
            raise ValueError("epsilon_scale must be 'paper224' or 'raw'")

    def pixel_epsilon(self, eps_reference: float, image_shape: tuple[int, int, int]) -> float:
        if self.epsilon_scale == "raw":
            return float(eps_reference)
        return scaled_epsilon(eps_reference, image_shape)


def _cell_label(defense: Defense, spec: GridSpec, attack_kind: str,
                eps_reference: float | None, mask_strategy: str | None,
                mask_k: int | None) -> str:
    parts = [
        f"defense={defense.name}",
        f"sigma={defense.smoothing.sigma:g}",
        "eps=unbounded" if eps_reference is None else f"eps={eps_reference:g}",
        f"attack={attack_kind}",
        "targeted" if spec.targeted else "untargeted",
    ]
    if attack_kind == "ghostcert":
        parts.append(f"mask={mask_strategy}-k{mask_k}")
    return "|".join(parts)


def _seed_scope(defense: Defense, attack_kind: str, eps_reference: float | None,
                targeted: bool) -> str:
    # mask strategy deliberately excluded so ablations share seeds
    eps_part = "unbounded" if eps_reference is None else f"{eps_reference:g}"
    return f"{defense.name}|{eps_part}|{attack_kind}|{int(targeted)}"


def run_trial(defense: Defense, attack_kind: str, dataset, image: EligibleImage,
              eps_reference: float | None, spec: GridSpec,
              mask_strategy: str | None = None, mask_k: int | None = None) -> tuple[TrialRecord, np.ndarray | None]:
    """Attack one eligible image and certify the result.

    Returns the trial record and the adversarial image (None when the
    trial failed).  Failures are captured in the record, never raised.
    """
    mask_strategy = mask_strategy or spec.mask_strategy
    mask_k = mask_k if mask_k is not None else spec.mask_k
    x = dataset.images[image.index]
    cell_id = _cell_label(defense, spec, attack_kind, eps_reference, mask_strategy, mask_k)
    scope = _seed_scope(defense, attack_kind, eps_reference, spec.targeted)
    trial_id = f"{derive_seed(spec.master_seed, 'trial', cell_id, image.image_id):016x}"
    attack_seed = derive_seed(spec.master_seed, "attack", scope, image.image_id)
    cert_seed = derive_seed(spec.master_seed, "postcert", scope, image.image_id)
    mask_seed = derive_seed(spec.master_seed, "mask", image.image_id)
    eps_pixel = None if eps_reference is None else spec.pixel_epsilon(eps_reference, x.shape)

    target_label: int | None = None
    if spec.targeted:
        target_label = pick_target_label(dataset, image.index)
    attack_label = target_label if spec.targeted else image.label

    record = TrialRecord(
        schema_version=RECORD_SCHEMA_VERSION,
        trial_id=trial_id,
        cell_id=cell_id,
        image_id=image.image_id,
        image_index=image.index,
        defense_kind=defense.kind,
        defense_name=defense.name,
        sigma=defense.smoothing.sigma,
        eps_reference=eps_reference,
        eps_pixel=eps_pixel,
        attack_kind=attack_kind,
        targeted=spec.targeted,
        mask_strategy=mask_strategy if attack_kind == "ghostcert" else None,
        mask_k=mask_k if attack_kind == "ghostcert" else None,
        mask_area=None,
        source_label=image.label,
        target_label=target_label,
        source_decision=image.source_decision,
        source_radius=image.source_radius,
        post_decision=None,
        post_radius=None,
        post_pa_lower=None,
        delta_l2=None,
        delta_linf=None,
        delta_tv=None,
        zero_gradient_steps=0,
        attack_seed=attack_seed,
        cert_seed=cert_seed,
        mask_seed=mask_seed,
        adversarial_file=None,
        wall_time_s=0.0,
        status="ok",
    )
    start = time.perf_counter()
    try:
        result = _dispatch_attack(
            defense, x, attack_label, attack_kind, eps_pixel, spec,
            mask_strategy, mask_k, attack_seed, mask_seed, record,
        )
        outcome = certify(defense.classifier, result.adversarial, defense.smoothing, cert_seed)
        record.post_decision = outcome.decision
        record.post_radius = outcome.radius
        record.post_pa_lower = outcome.pa_lower
        record.delta_l2 = result.l2_norm
        record.delta_linf = result.linf_norm
        record.delta_tv = result.total_variation
        record.zero_gradient_steps = len(result.zero_gradient_steps)
        adversarial = result.adversarial
    except Exception as exc:  # noqa: BLE001 - per-trial isolation by contract
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
        adversarial = None
    record.wall_time_s = time.perf_counter() - start
    return record, adversarial


def _dispatch_attack(defense: Defense, x: np.ndarray, attack_label: int,
                     attack_kind: str, eps_pixel: float | None, spec: GridSpec,
                     mask_strategy: str, mask_k: int, attack_seed: int,
                     mask_seed: int, record: TrialRecord) -> AttackResult:
    targeted = spec.targeted
    target = record.target_label
    if attack_kind == "ghostcert":
        if eps_pixel is None:
            raise ValueError("masked attack needs a finite budget")
        saliency_label = (
            target if (targeted and spec.saliency_on == "target" and target is not None)
            else record.source_label
        )
        mask = build_attack_mask(defense, x, saliency_label, mask_strategy, mask_k, mask_seed)
        record.mask_area = mask.area
        step = spec.step_size if spec.step_size is not None else 2.5 * eps_pixel / max(spec.steps, 1)
        cfg = AttackConfig(
            epsilon=eps_pixel, step_size=step, steps=spec.steps,
            noise_batch=spec.noise_batch, sigma=defense.smoothing.sigma,
            targeted=targeted, target_label=target, seed=attack_seed,
        )
        return ghostcert(defense.classifier, x, attack_label, mask, cfg)
    if attack_kind in ("shadow", "shadow_bounded"):
        bounded = attack_kind == "shadow_bounded"
        if bounded and eps_pixel is None:
            raise ValueError("bounded shadow needs a finite budget")
        step = spec.shadow_step_size
        if bounded and spec.step_size is None and eps_pixel is not None:
            step = 2.5 * eps_pixel / max(spec.steps, 1)
        elif spec.step_size is not None:
            step = spec.step_size
        cfg = ShadowConfig(
            step_size=step, steps=spec.steps,
            tv_weight=spec.shadow_tv_weight,
            color_mean_weight=spec.shadow_color_mean_weight,
            channel_sim_weight=spec.shadow_channel_sim_weight,
            l2_bound=eps_pixel if bounded else None,
            sigma=defense.smoothing.sigma, noise_batch=spec.noise_batch,
            targeted=targeted, target_label=target, seed=attack_seed,
        )
        attack_fn = shadow_attack_bounded if bounded else shadow_attack
        return attack_fn(defense.classifier, x, attack_label, cfg)
    raise ValueError(f"unknown attack kind {attack_kind!r}")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _ok_records(records) -> list[TrialRecord]:
    out = [r for r in records if r.status == "ok"]
    if not out:
        raise ValueError("no completed records to aggregate")
    return out


def asr_untargeted(records) -> float:
    """Fraction not certified as the source label (abstentions count)."""
    ok = _ok_records(records)
    return sum(r.post_decision != r.source_label for r in ok) / len(ok)


def asr_untargeted_strict(records) -> float:
    """Fraction certified as some label other than the source (abstentions
    excluded); the stricter misclassification-only reading."""
    ok = _ok_records(records)
    return sum(
        r.post_decision != r.source_label and r.post_decision != ABSTAIN for r in ok
    ) / len(ok)


def asr_targeted(records) -> float:
    """Fraction certified as the target label."""
    ok = _ok_records(records)
    if any(r.target_label is None for r in ok):
        raise ValueError("asr_targeted needs targeted records")
    return sum(r.post_decision == r.target_label for r in ok) / len(ok)


def dos_rate(records) -> float:
    """Fraction of post-attack abstentions."""
    ok = _ok_records(records)
    return sum(r.post_decision == ABSTAIN for r in ok) / len(ok)


def mean_spoofing_radius(records) -> float | None:
    """Mean post-attack radius over successful trials; None without successes."""
    ok = _ok_records(records)
    radii = [r.post_radius for r in ok if r.succeeded]
    if not radii:
        return None
    return float(np.mean(radii))


def imperceptibility_metrics(x: np.ndarray, x_adv: np.ndarray) -> dict[str, float]:
    """L2, Linf and total-variation of the actual image difference."""
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if x.shape != x_adv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_adv.shape}")
    diff = x_adv - x
    return {
        "l2": float(np.linalg.norm(diff)),
        "linf": float(np.max(np.abs(diff))) if diff.size else 0.0,
        "tv": total_variation(diff),
    }


@dataclass(frozen=True)
class MetricsSummary:
    """Aggregates for one grid cell."""

    cell_id: str
    defense_name: str
    defense_kind: str
    sigma: float
    eps_reference: float | None
    attack_kind: str
    targeted: bool
    mask_strategy: str | None
    mask_k: int | None
    trial_count: int
    failed_count: int
    asr: float
    asr_strict: float | None
    dos: float
    source_fraction: float
    other_fraction: float
    mean_spoofing_radius: float | None
    mean_source_radius: float
    mean_delta_l2: float
    mean_delta_linf: float
    mean_delta_tv: float

    def __post_init__(self):
        for name in ("asr", "dos", "source_fraction", "other_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0,1]")


def outcome_counts(records) -> dict[str, int]:
    """Exact partition of completed targeted/untargeted records into
    target, abstain, source and other-label outcomes."""
    ok = _ok_records(records)
    counts = {"target": 0, "abstain": 0, "source": 0, "other": 0, "total": len(ok)}
    for r in ok:
        if r.post_decision == ABSTAIN:
            counts["abstain"] += 1
        elif r.targeted and r.post_decision == r.target_label:
            counts["target"] += 1
        elif r.post_decision == r.source_label:
            counts["source"] += 1
        else:
            counts["other"] += 1
    return counts


def summarize_cell(records) -> MetricsSummary:
    """Metrics for records that all belong to one cell."""
    ok = _ok_records(records)
    cells = {r.cell_id for r in ok}
    if len(cells) != 1:
        raise ValueError(f"records span multiple cells: {sorted(cells)}")
    first = ok[0]
    n = len(ok)
    counts = outcome_counts(ok)
    dos = counts["abstain"] / n
    source_fraction = counts["source"] / n
    if first.targeted:
        asr = counts["target"] / n
        asr_strict = None
        other_fraction = counts["other"] / n
    else:
        asr = (counts["abstain"] + counts["other"]) / n
        asr_strict = counts["other"] / n
        other_fraction = counts["other"] / n
    return MetricsSummary(
        cell_id=first.cell_id,
        defense_name=first.defense_name,
        defense_kind=first.defense_kind,
        sigma=first.sigma,
        eps_reference=first.eps_reference,
        attack_kind=first.attack_kind,
        targeted=first.targeted,
        mask_strategy=first.mask_strategy,
        mask_k=first.mask_k,
        trial_count=n,
        failed_count=sum(r.status != "ok" for r in records),
        asr=asr,
        asr_strict=asr_strict,
        dos=dos,
        source_fraction=source_fraction,
        other_fraction=other_fraction,
        mean_spoofing_radius=mean_spoofing_radius(ok),
        mean_source_radius=float(np.mean([r.source_radius for r in ok])),
        mean_delta_l2=float(np.mean([r.delta_l2 for r in ok])),
        mean_delta_linf=float(np.mean([r.delta_linf for r in ok])),
        mean_delta_tv=float(np.mean([r.delta_tv for r in ok])),
    )


def summarize_records(records) -> list[MetricsSummary]:
    """Per-cell summaries in first-seen cell order."""
    by_cell: dict[str, list[TrialRecord]] = {}
    for r in records:
        by_cell.setdefault(r.cell_id, []).append(r)
    return [summarize_cell(cell_records) for cell_records in by_cell.values()]


def write_summary_csv(summaries: list[MetricsSummary], path) -> None:
    fields = [f.name for f in MetricsSummary.__dataclass_fields__.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for s in summaries:
            writer.writerow(asdict(s))


# ---------------------------------------------------------------------------
# Grid and ablation drivers
# ---------------------------------------------------------------------------


def run_grid(defenses: list[Defense], dataset, spec: GridSpec, store: RecordStore,
             progress=None) -> tuple[list[TrialRecord], list[MetricsSummary]]:
    """Run every (defense, epsilon, attack) cell over eligible images.

    Completed trials already in the store are skipped, so interrupted
    grids resume without recomputation.  Returns all records relevant to
    the spec plus per-cell summaries.
    """
    wanted_ids: set[str] = set()
    for defense in defenses:
        eligible = select_eligible_images(dataset, defense, spec.images_per_cell,
                                          spec.master_seed)
        for attack_kind in spec.attack_kinds:
            eps_values: tuple[float | None, ...]
            eps_values = (None,) if attack_kind == "shadow" else spec.epsilons
            for eps_reference in eps_values:
                cell_id = _cell_label(defense, spec, attack_kind, eps_reference,
                                      spec.mask_strategy, spec.mask_k)
                for image in eligible:
                    trial_id = f"{derive_seed(spec.master_seed, 'trial', cell_id, image.image_id):016x}"
                    wanted_ids.add(trial_id)
                    if trial_id in store:
                        continue
                    record, adversarial = run_trial(
                        defense, attack_kind, dataset, image, eps_reference, spec
                    )
                    store.append(record, adversarial)
                    if progress is not None:
                        progress(record)
    records = [r for r in store.load_records() if r.trial_id in wanted_ids]
    return records, summarize_records(records)


def run_ablation(kind: str, defenses: list[Defense], dataset, spec: GridSpec,
                 store: RecordStore, ks: tuple[int, ...] = (3, 5, 7),
                 progress=None) -> tuple[list[TrialRecord], list[MetricsSummary]]:
    """Mask-construction ablations over the masked attack only.

    ``mask_strategy`` compares saliency-guided, 50% random-pixel and
    random-k-region masks under identical seeds and budgets;
    ``k_sensitivity`` sweeps the top-k count over the same trials.
    """
    if kind == "mask_strategy":
        variants = [("saliency", spec.mask_k), ("random_pixel", spec.mask_k),
                    ("random_region", spec.mask_k)]
    elif kind == "k_sensitivity":
        variants = [("saliency", k) for k in ks]
    else:
        raise ValueError(f"unknown ablation kind {kind!r}")
    wanted_ids: set[str] = set()
    for defense in defenses:
        eligible = select_eligible_images(dataset, defense, spec.images_per_cell,
                                          spec.master_seed)
        for eps_reference in spec.epsilons:
            for strategy, k in variants:
                cell_id = _cell_label(defense, spec, "ghostcert", eps_reference, strategy, k)
                for image in eligible:
                    trial_id = f"{derive_seed(spec.master_seed, 'trial', cell_id, image.image_id):016x}"
                    wanted_ids.add(trial_id)
                    if trial_id in store:
                        continue
                    record, adversarial = run_trial(
                        defense, "ghostcert", dataset, image, eps_reference, spec,
                        mask_strategy=strategy, mask_k=k,
                    )
                    store.append(record, adversarial)
                    if progress is not None:
                        progress(record)
    records = [r for r in store.load_records() if r.trial_id in wanted_ids]
    return records, summarize_records(records)
