"""Run orchestration: dataset ingestion, configuration, scoring, persistence.

A run walks a JSONL dataset, labels every record with the atomic-fact
aligner, scores it with the contrast pipeline plus all enabled baselines
from the same cached samples, and appends one JSON object per record to
``records.jsonl`` in the run directory. Reruns skip ids that are already
present, so interrupted runs resume where they stopped.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import alfa as alfa_mod
from . import baselines as bl
from .backends import (
    HttpLlmBackend,
    HttpNliBackend,
    HttpVlmBackend,
    OpenAiChatClient,
    ScriptedLlmBackend,
    ScriptedNliBackend,
    ScriptedVlmBackend,
    load_script,
)
from .backends.base import (
    BackendConfig,
    GenerationRequest,
    LlmBackend,
    NliBackend,
    VlmBackend,
    encode_png,
)
from .backends.templates import template_hashes
from .errors import (
    BackendError,
    ConfigError,
    DuplicateId,
    EmptyRun,
    MissingImage,
    ParseError,
    SingleClass,
    UnivrseError,
)
from .longform import claim_key, score_report
from .metrics import ScoredSample, auc, aua, binarize_label, normalize_confidence
from .perturb import (
    DistortionConfig,
    ImageTensor,
    WeakTransformConfig,
    load_image,
)
from .rng import LANE_AUX, LANE_DEPLOY, derive_seed
from .semantic import GenSample, SamplingConfig, SemanticDistribution
from .vcse import VseConfig, VseOutcome, run_contrast_pipeline

__all__ = [
    "DatasetRecord",
    "BackendSpec",
    "RunConfig",
    "BackendSet",
    "ingest_dataset",
    "load_config",
    "config_hash",
    "build_backends",
    "run",
    "report",
    "METHOD_ORDER",
]

TASK_VQA = "vqa"
TASK_VRG = "vrg"

METHOD_ORDER = [
    bl.Method.AVG_PROB,
    bl.Method.MAX_PROB,
    bl.Method.AVG_ENT,
    bl.Method.MAX_ENT,
    bl.Method.SE,
    bl.Method.RADFLAG,
    bl.Method.CROSS_CHECK,
    bl.Method.UNIVRSE,
]


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    image_path: str
    task: str
    question: str
    reference: str


def ingest_dataset(path) -> list[DatasetRecord]:
    """Read and validate a JSONL dataset; image paths resolve relative to it."""
    path = Path(path)
    base = path.parent
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc}")
            for key in ("id", "image_path", "task", "question", "reference"):
                if key not in obj or not isinstance(obj[key], str):
                    raise ParseError(line_no, f"missing or non-string field {key!r}")
            if obj["task"] not in (TASK_VQA, TASK_VRG):
                raise ParseError(line_no, f"task must be vqa or vrg, got {obj['task']!r}")
            if obj["id"] in seen:
                raise DuplicateId(f"duplicate record id {obj['id']!r}")
            seen.add(obj["id"])
            image_path = str((base / obj["image_path"]).resolve())
            if not Path(image_path).is_file():
                raise MissingImage(f"record {obj['id']!r}: image not found: {image_path}")
            records.append(
                DatasetRecord(
                    id=obj["id"], image_path=image_path, task=obj["task"],
                    question=obj["question"], reference=obj["reference"],
                )
            )
    return records


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "http"  # "http" or "mock"
    endpoint: str = ""
    model: str = "mock"
    auth_env: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    parallelism: int = 4
    script: str = ""  # mock only

    def ident(self) -> str:
        if self.kind == "mock":
            return f"mock:{Path(self.script).name}"
        return f"{self.model}@{self.endpoint}"


@dataclass(frozen=True)
class RunConfig:
    vlm: BackendSpec
    nli: BackendSpec
    llm: BackendSpec
    aux: tuple[BackendSpec, ...] = ()
    seed: int = 0
    m_samples: int = 10
    temperature: float = 1.0
    deploy_temperature: float = 0.1
    lam: float = 1.0
    transform_preset: str = "trans1"
    weak_enabled: bool = True
    distortion_preset: str = "noise3"
    placement: str = "both"
    length_normalize: bool = False
    raw_masses: bool = False
    binarize_threshold: float = 0.0
    max_tokens: int = 256
    top_logprobs: int = 20
    nli_use_question_context: bool = True
    workers: int = 4
    dataset_name: str = ""

    def sampling(self) -> SamplingConfig:
        return SamplingConfig(
            m_samples=self.m_samples,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            top_logprobs=self.top_logprobs,
            length_normalize=self.length_normalize,
            raw_masses=self.raw_masses,
        )

    def vse_config(self, record_key: str, *, nli_context: str | None = None) -> VseConfig:
        weak = replace(WeakTransformConfig.preset(self.transform_preset),
                       enabled=self.weak_enabled)
        return VseConfig(
            sampling=self.sampling(),
            weak=weak,
            distortion=DistortionConfig.preset(self.distortion_preset),
            placement=self.placement,
            lam=self.lam,
            run_seed=self.seed,
            record_key=record_key,
            nli_context=nli_context,
        )


def _spec_from_table(table: dict, where: str) -> BackendSpec:
    kind = table.get("kind", "http")
    if kind not in ("http", "mock"):
        raise ConfigError(f"{where}: kind must be http or mock, got {kind!r}")
    if kind == "http" and not table.get("endpoint"):
        raise ConfigError(f"{where}: http backend needs an endpoint")
    if kind == "mock" and not table.get("script"):
        raise ConfigError(f"{where}: mock backend needs a script path")
    allowed = {f.name for f in dataclasses.fields(BackendSpec)}
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return BackendSpec(**table)


def load_config(path) -> RunConfig:
    """Parse a TOML run configuration file."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    backends = data.pop("backends", {})
    for role in ("vlm", "nli", "llm"):
        if role not in backends:
            raise ConfigError(f"config must define [backends.{role}]")
    if "lambda" in data:  # keyword in Python, plain key in TOML
        data["lam"] = data.pop("lambda")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(
            vlm=_spec_from_table(backends["vlm"], "backends.vlm"),
            nli=_spec_from_table(backends["nli"], "backends.nli"),
            llm=_spec_from_table(backends["llm"], "backends.llm"),
            aux=tuple(
                _spec_from_table(t, f"backends.aux[{i}]")
                for i, t in enumerate(backends.get("aux", []))
            ),
            **data,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def config_hash(config: RunConfig) -> str:
    """Hash every config field plus the prompt-template hashes."""
    payload = dataclasses.asdict(config)
    payload["templates"] = template_hashes()
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class BackendSet:
    vlm: VlmBackend
    nli: NliBackend
    llm: LlmBackend
    aux: list[VlmBackend] = field(default_factory=list)
    ids: dict = field(default_factory=dict)


def _build_one(spec: BackendSpec, role: str, *, check: bool):
    if spec.kind == "mock":
        try:
            script = load_script(spec.script)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"backends.{role}: cannot load script: {exc}") from exc
        return {
            "vlm": ScriptedVlmBackend,
            "nli": ScriptedNliBackend,
            "llm": ScriptedLlmBackend,
            "aux": ScriptedVlmBackend,
        }[role](script)
    cfg = BackendConfig(
        endpoint=spec.endpoint, model=spec.model, auth_env=spec.auth_env,
        timeout=spec.timeout, max_retries=spec.max_retries,
        parallelism=spec.parallelism,
    )
    client = OpenAiChatClient(cfg)
    if check:
        try:
            client.check_reachable()
        except BackendError as exc:
            raise ConfigError(f"backends.{role}: {exc}") from exc
    if role in ("vlm", "aux"):
        return HttpVlmBackend(client)
    if role == "nli":
        return HttpNliBackend(client)
    return HttpLlmBackend(client)


def build_backends(config: RunConfig, *, check_reachable: bool = True) -> BackendSet:
    """Construct every configured backend; raises ConfigError on bootstrap failure."""
    ids = {
        "vlm": config.vlm.ident(),
        "nli": config.nli.ident(),
        "llm": config.llm.ident(),
        "aux": [spec.ident() for spec in config.aux],
    }
    return BackendSet(
        vlm=_build_one(config.vlm, "vlm", check=check_reachable),
        nli=_build_one(config.nli, "nli", check=check_reachable),
        llm=_build_one(config.llm, "llm", check=check_reachable),
        aux=[_build_one(s, "aux", check=check_reachable) for s in config.aux],
        ids=ids,
    )


# --- serialization helpers -------------------------------------------------

def _sample_dict(s: GenSample) -> dict:
    return {
        "text": s.text,
        "token_logprobs": list(s.token_logprobs),
        "seq_logprob": s.seq_logprob,
        "transform_seed": s.transform_seed,
        "top_logprobs": [list(t) for t in s.top_logprobs] if s.top_logprobs else None,
    }


def _spd_dict(spd: SemanticDistribution) -> dict:
    return {
        "classes": [
            {"id": c.id, "representative": c.representative,
             "member_indices": c.member_indices, "mass": c.mass}
            for c in spd.classes
        ],
        "probs": spd.probs,
        "degenerate": spd.degenerate,
    }


def _vse_outcome_dict(outcome: VseOutcome) -> dict:
    return {
        "vse": {
            "value": outcome.score.value,
            "n_classes": outcome.score.n_classes,
            "flagged_degenerate": outcome.score.flagged_degenerate,
        },
        "vcd": {
            "unified_classes": outcome.vcd.unified_classes,
            "p_orig": outcome.vcd.p_orig,
            "p_dist": outcome.vcd.p_dist,
            "p_contrasted": outcome.vcd.p_contrasted,
            "lambda": outcome.vcd.lam,
        },
        "orig_spd": _spd_dict(outcome.orig_spd),
        "dist_spd": _spd_dict(outcome.dist_spd),
        "orig_samples": [_sample_dict(s) for s in outcome.orig_samples],
        "dist_samples": [_sample_dict(s) for s in outcome.dist_samples],
        "distortion_seed": outcome.distortion_seed,
    }


def _scores_dict(scores: list[bl.UncertaintyScore]) -> list[dict]:
    return [
        {"method": s.method.value, "value": s.value, "orientation": s.orientation.value}
        for s in scores
    ]


# --- per-record processing -------------------------------------------------

def _token_baselines(sample: GenSample) -> list[bl.UncertaintyScore]:
    return [
        bl.UncertaintyScore.of(bl.Method.AVG_PROB, bl.avg_prob(sample)),
        bl.UncertaintyScore.of(bl.Method.MAX_PROB, bl.max_prob(sample)),
        bl.UncertaintyScore.of(bl.Method.AVG_ENT, bl.avg_ent(sample)),
        bl.UncertaintyScore.of(bl.Method.MAX_ENT, bl.max_ent(sample)),
    ]


def _aux_responses(
    image: ImageTensor, question: str, config: RunConfig,
    backends: BackendSet, record_key: str,
) -> list[str]:
    texts = []
    for i, aux in enumerate(backends.aux):
        seed = derive_seed(config.seed, record_key, LANE_AUX, i)
        result = aux.generate(
            GenerationRequest(
                prompt=question, image_png=encode_png(image),
                temperature=config.deploy_temperature,
                max_tokens=config.max_tokens,
                top_logprobs=config.top_logprobs, seed=seed,
            )
        )
        texts.append(result.text)
    return texts


def _process_vqa(record: DatasetRecord, config: RunConfig, backends: BackendSet) -> dict:
    image = load_image(record.image_path)
    labeled = alfa_mod.label_sample(
        image, record.question, record.reference, backends.vlm, backends.llm,
        run_seed=config.seed, record_key=record.id,
        temperature=config.deploy_temperature,
        max_tokens=config.max_tokens, top_logprobs=config.top_logprobs,
    )
    outcome = run_contrast_pipeline(
        image, record.question, config.vse_config(record.id),
        backends.vlm, backends.nli,
    )

    scores = _token_baselines(labeled.deploy_sample)
    scores.append(bl.UncertaintyScore.of(
        bl.Method.SE, bl.semantic_entropy_from_spd(outcome.orig_spd)))
    scores.append(bl.UncertaintyScore.of(
        bl.Method.RADFLAG,
        bl.radflag_score(labeled.response, outcome.orig_samples,
                         backends.nli, context=record.question)))
    if backends.aux:
        others = _aux_responses(image, record.question, config, backends, record.id)
        scores.append(bl.UncertaintyScore.of(
            bl.Method.CROSS_CHECK,
            bl.cross_check_score(labeled.response, others,
                                 backends.nli, context=record.question)))
    scores.append(bl.UncertaintyScore.of(bl.Method.UNIVRSE, outcome.score.value))

    return {
        "id": record.id,
        "task": TASK_VQA,
        "response": labeled.response,
        "deploy_seed": labeled.deploy_seed,
        "deploy_sample": _sample_dict(labeled.deploy_sample),
        "alfa": dataclasses.asdict(labeled.label),
        "claims": [dataclasses.asdict(c) for c in labeled.claims],
        "facts": [dataclasses.asdict(f) for f in labeled.facts],
        "judgments": [dataclasses.asdict(j) for j in labeled.judgments],
        "scores": _scores_dict(scores),
        "univrse": _vse_outcome_dict(outcome),
    }


def _process_vrg(record: DatasetRecord, config: RunConfig, backends: BackendSet) -> dict:
    image = load_image(record.image_path)
    claim_context = None if config.nli_use_question_context else ""
    scoring = score_report(
        image, record.question, backends.vlm, backends.nli, backends.llm,
        config.vse_config(record.id, nli_context=claim_context),
        deploy_temperature=config.deploy_temperature,
    )
    facts = alfa_mod.decompose_reference(record.reference, record.question, backends.llm)
    judgments = alfa_mod.match_claims(
        [item.claim.text for item in scoring.items], facts, backends.llm,
        instruction=record.question,
    )
    label = alfa_mod.compute_alfa(judgments)

    claim_dicts = []
    for item, judgment in zip(scoring.items, judgments):
        claim_alpha = 1.0 if judgment.verdict == alfa_mod.HALLUCINATED else 0.0
        entry = {
            "claim": dataclasses.asdict(item.claim),
            "question": item.question,
            "verdict": judgment.verdict,
            "alpha_h": claim_alpha,
            "error": item.error,
        }
        if item.error is None:
            lane_key = claim_key(record.id, item.claim.text)
            deploy_seed = derive_seed(config.seed, lane_key, LANE_DEPLOY)
            # The claim's own low-temperature verification answer feeds the
            # token baselines; RadFlag audits the claim text itself.
            answer = backends.vlm.generate(
                GenerationRequest(
                    prompt=item.question, image_png=encode_png(image),
                    temperature=config.deploy_temperature,
                    max_tokens=config.max_tokens,
                    top_logprobs=config.top_logprobs, seed=deploy_seed,
                )
            )
            answer_sample = GenSample.from_result(answer, deploy_seed)
            context = item.question if config.nli_use_question_context else ""
            scores = _token_baselines(answer_sample)
            scores.append(bl.UncertaintyScore.of(
                bl.Method.SE, bl.semantic_entropy_from_spd(item.detail.orig_spd)))
            scores.append(bl.UncertaintyScore.of(
                bl.Method.RADFLAG,
                bl.radflag_score(item.claim.text, item.detail.orig_samples,
                                 backends.nli, context=context)))
            if backends.aux:
                others = _aux_responses(image, item.question, config, backends, lane_key)
                scores.append(bl.UncertaintyScore.of(
                    bl.Method.CROSS_CHECK,
                    bl.cross_check_score(item.claim.text, others,
                                         backends.nli, context=context)))
            scores.append(bl.UncertaintyScore.of(bl.Method.UNIVRSE, item.vse.value))
            entry["scores"] = _scores_dict(scores)
            entry["deploy_sample"] = _sample_dict(answer_sample)
            entry["univrse"] = _vse_outcome_dict(item.detail)
        claim_dicts.append(entry)

    return {
        "id": record.id,
        "task": TASK_VRG,
        "response": scoring.report,
        "deploy_sample": _sample_dict(scoring.deploy_sample),
        "alfa": dataclasses.asdict(label),
        "facts": [dataclasses.asdict(f) for f in facts],
        "judgments": [dataclasses.asdict(j) for j in judgments],
        "claims_scored": claim_dicts,
    }


def process_record(record: DatasetRecord, config: RunConfig, backends: BackendSet) -> dict:
    if record.task == TASK_VRG:
        return _process_vrg(record, config, backends)
    return _process_vqa(record, config, backends)


# --- run / report ----------------------------------------------------------

def _existing_ids(records_path: Path) -> set[str]:
    ids = set()
    if records_path.is_file():
        with records_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    ids.add(json.loads(line)["id"])
    return ids


def run(
    dataset: list[DatasetRecord],
    config: RunConfig,
    backends: BackendSet,
    out_dir,
) -> Path:
    """Score every dataset record, appending RunRecords to records.jsonl.

    Records whose ids already exist in the run directory are skipped, so a
    rerun finishes an interrupted run. Per-record failures are persisted as
    error records and do not stop the run.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)

    lock_path = out_dir / "config.lock.json"
    lock_payload = {
        "config": dataclasses.asdict(config),
        "config_hash": chash,
        "templates": template_hashes(),
        "backend_ids": backends.ids,
    }
    if lock_path.is_file():
        previous = json.loads(lock_path.read_text(encoding="utf-8"))
        if previous.get("config_hash") != chash:
            raise ConfigError(
                "run directory was produced with a different configuration "
                f"(stored {previous.get('config_hash')}, current {chash})"
            )
    else:
        lock_path.write_text(json.dumps(lock_payload, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")

    records_path = out_dir / "records.jsonl"
    done = _existing_ids(records_path)
    todo = [r for r in dataset if r.id not in done]

    write_lock = threading.Lock()

    def handle(record: DatasetRecord) -> dict:
        started = time.time()
        try:
            payload = process_record(record, config, backends)
        except UnivrseError as exc:
            payload = {
                "id": record.id,
                "task": record.task,
                "error": f"{type(exc).__name__}: {exc}",
            }
        payload.setdefault("error", None)
        payload["config_hash"] = chash
        payload["template_hashes"] = template_hashes()
        payload["backend_ids"] = backends.ids
        payload["started_at"] = started
        payload["finished_at"] = time.time()
        return payload

    with records_path.open("a", encoding="utf-8") as sink:
        if config.workers <= 1:
            for record in todo:
                line = json.dumps(handle(record))
                sink.write(line + "\n")
                sink.flush()
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(handle, r) for r in todo]
                for future in as_completed(futures):
                    line = json.dumps(future.result())
                    with write_lock:
                        sink.write(line + "\n")
                        sink.flush()
    return out_dir


def _load_records(run_dir: Path) -> list[dict]:
    records_path = run_dir / "records.jsonl"
    if not records_path.is_file():
        raise EmptyRun(f"no records.jsonl in {run_dir}")
    records = []
    with records_path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if not records:
        raise EmptyRun(f"records.jsonl in {run_dir} is empty")
    return records


def scored_samples_by_method(
    records: list[dict], binarize_threshold: float
) -> dict[str, list[ScoredSample]]:
    """Flatten run records into per-method evaluation units.

    VQA records contribute one unit per record; VRG records contribute one
    unit per successfully scored claim.
    """
    units: list[tuple[str, float, list[dict]]] = []
    for rec in sorted(records, key=lambda r: r["id"]):
        if rec.get("error"):
            continue
        if rec["task"] == TASK_VQA:
            units.append((rec["id"], rec["alfa"]["alpha_h"], rec["scores"]))
        else:
            for claim in rec.get("claims_scored", []):
                if claim.get("error"):
                    continue
                units.append(
                    (f"{rec['id']}/claim{claim['claim']['index']}",
                     claim["alpha_h"], claim["scores"])
                )
    by_method: dict[str, list[ScoredSample]] = {}
    for unit_id, alpha_h, scores in units:
        for sc in scores:
            score = bl.UncertaintyScore.of(bl.Method(sc["method"]), sc["value"])
            by_method.setdefault(sc["method"], []).append(
                ScoredSample(
                    id=unit_id,
                    confidence=normalize_confidence(score),
                    alpha_h=alpha_h,
                    binary_halluc=binarize_label(alpha_h, binarize_threshold),
                )
            )
    return by_method


def report(run_dir) -> tuple[Path, Path]:
    """Produce report.csv and summary.txt for a run directory.

    Output is a pure function of the stored records: rerunning report on the
    same directory writes byte-identical files.
    """
    run_dir = Path(run_dir)
    records = _load_records(run_dir)
    lock = json.loads((run_dir / "config.lock.json").read_text(encoding="utf-8"))
    threshold = lock["config"]["binarize_threshold"]
    chash = lock["config_hash"]
    dataset_name = lock["config"]["dataset_name"] or "dataset"

    by_method = scored_samples_by_method(records, threshold)

    rows = []
    notes = []
    for method in METHOD_ORDER:
        samples = by_method.get(method.value)
        if not samples:
            continue
        try:
            auc_cell = f"{auc(samples):.6f}"
        except SingleClass as exc:
            auc_cell = "NA"
            notes.append(f"{method.value}: AUC unavailable ({exc})")
        aua_cell = f"{aua(samples):.6f}"
        rows.append(
            f"{method.value},{dataset_name},{len(samples)},{auc_cell},"
            f"{aua_cell},{threshold:g},{chash}"
        )

    csv_path = run_dir / "report.csv"
    csv_path.write_text(
        "method,dataset,n,auc,aua,binarize_threshold,config_hash\n"
        + "\n".join(rows) + "\n",
        encoding="utf-8",
    )

    n_errors = sum(1 for r in records if r.get("error"))
    summary_lines = [
        f"run directory: {run_dir.name}",
        f"dataset: {dataset_name}",
        f"records: {len(records)} ({n_errors} with errors)",
        f"binarize threshold: {threshold:g}",
        f"config hash: {chash}",
        "",
    ]
    for row in rows:
        method, _, n, auc_cell, aua_cell, *_ = row.split(",")
        summary_lines.append(f"{method:>10}: n={n} AUC={auc_cell} AUA={aua_cell}")
    summary_lines.extend([""] + notes if notes else [])
    summary_path = run_dir / "summary.txt"
    summary_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    return csv_path, summary_path
