"""
Caption Engine Orchestrator

Multi-step pipelines behind the CLI commands: corpus generation, training,
captioning (with optional heatmaps), evaluation and verification.

Every pipeline prints step banners to stdout and returns a result dict with
a `success` flag. Failures carry `error` and an `error_kind` of "data",
"numerical" or "internal" that the CLI maps to exit codes.
"""

import logging
import time
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.attention import DimensionMismatchError
from modules.data import (
    AnnotationDataset,
    AnnotationFormatError,
    SceneSpecError,
    Vocabulary,
    build_dataset,
    build_vocabulary,
    decode_caption,
    generate_corpus,
    group_records,
    length_histogram,
    read_annotations,
    render_scene,
    scene_from_grid,
    split_corpus,
    write_annotations,
)
from modules.decoder import (
    CheckpointFormatError,
    DecoderParams,
    generate,
    init_params,
    load_checkpoint,
    save_checkpoint,
    teacher_forced_log_likelihood,
)
from modules.evalviz import (
    BleuInputError,
    HeatmapShapeError,
    alignment_score,
    bleu,
    export_heatmaps,
    mean_alignment_score,
    render_attention,
)
from modules.training import MetricsLog, NonFiniteLossError, TrainingExample, train
from modules.verification import format_table, run_suite
from utils.run_config import RunConfig, write_effective_config

logger = logging.getLogger(__name__)

DATA_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    AnnotationFormatError,
    CheckpointFormatError,
    DimensionMismatchError,
    SceneSpecError,
    BleuInputError,
    HeatmapShapeError,
)
NUMERICAL_ERRORS = (NonFiniteLossError, ArithmeticError)

VOCAB_SUFFIX = ".vocab"
CHECKPOINT_NAME = "model.ckpt"
METRICS_NAME = "metrics.log"


def _banner(title: str) -> None:
    print("\n" + "=" * 80)
    print(title)
    print("=" * 80)


def _failure(error: Exception) -> Dict[str, Any]:
    if isinstance(error, NUMERICAL_ERRORS):
        kind = "numerical"
    elif isinstance(error, DATA_ERRORS):
        kind = "data"
    else:
        kind = "internal"
        traceback.print_exc()
    print(f"\n[ERROR] Pipeline failed: {error}")
    return {"success": False, "error": str(error), "error_kind": kind}


# ----------------------------------------------------------------------
# Shared helpers
# ----------------------------------------------------------------------

def vocabulary_path(dataset_path: Path) -> Path:
    return dataset_path.with_name(dataset_path.name + VOCAB_SUFFIX)


def load_vocabulary(dataset_path: Path, config: RunConfig, K: int) -> Vocabulary:
    """The vocabulary written next to the dataset, else the one the scene spec builds."""
    sidecar = vocabulary_path(dataset_path)
    vocabulary = Vocabulary.load(sidecar) if sidecar.exists() else build_vocabulary(config.data.spec)
    if vocabulary.K != K:
        logger.warning("Vocabulary has %d tokens but the dataset declares K=%d; printing token ids", vocabulary.K, K)
        vocabulary = Vocabulary(f"#{i}" for i in range(3, K))
    return vocabulary


def prepare_examples(dataset: AnnotationDataset) -> Tuple[List[TrainingExample], List[TrainingExample], List[TrainingExample]]:
    """
    Split images 80/10/10 by index.

    Training gets one example per caption; validation and test get one per
    image, scored against all of that image's captions.
    """
    groups = group_records(dataset)
    train_groups, val_groups, test_groups = split_corpus(groups)

    def per_image(selected) -> List[TrainingExample]:
        return [
            TrainingExample(g.grid, g.records[0].caption, tuple(g.references), g.alignment)
            for g in selected
        ]

    training = [
        TrainingExample(g.grid, record.caption, tuple(g.references), record.alignment)
        for g in train_groups
        for record in g.records
    ]
    return training, per_image(val_groups), per_image(test_groups)


def _check_compatible(params: DecoderParams, dataset: AnnotationDataset) -> None:
    dims = params.dims
    if dims.K != dataset.K or dims.D != dataset.D:
        raise DimensionMismatchError(
            f"Checkpoint expects K={dims.K}, D={dims.D} but the dataset has K={dataset.K}, D={dataset.D} (L={dataset.L})"
        )


def _require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise FileNotFoundError(f"No {what} path given")
    return Path(path)


def _checkpoint_path(config: RunConfig) -> Path:
    return Path(config.paths.checkpoint) if config.paths.checkpoint else Path(config.paths.output_dir) / CHECKPOINT_NAME


# ----------------------------------------------------------------------
# Pipelines
# ----------------------------------------------------------------------

def run_gen_data(config: RunConfig, out_path: Path) -> Dict[str, Any]:
    """
    Generate the synthetic corpus and write it as an annotation file.

    Returns:
        Dict with success, path, scenes, records, histogram
    """
    _banner("SYNTHETIC CORPUS GENERATION")
    start_time = time.time()
    try:
        spec = config.data.spec
        scene_rng, noise_rng = np.random.default_rng(config.seed).spawn(2)

        print(f"\n[STEP 1] Generating {config.data.count} scenes on a {spec.grid_side}x{spec.grid_side} grid...")
        step_start = time.time()
        scenes = generate_corpus(spec, config.data.count, scene_rng)
        histogram = length_histogram(scenes)
        print(f"  [OK] Completed in {time.time() - step_start:.2f}s")

        print("\n[STEP 2] Encoding scenes...")
        step_start = time.time()
        vocabulary = build_vocabulary(spec)
        dataset = build_dataset(scenes, spec, vocabulary, noise_rng, config.data.all_references)
        print(f"  [OK] Completed in {time.time() - step_start:.2f}s")
        print(f"  L={dataset.L} D={dataset.D} K={dataset.K}")

        print("\n[STEP 3] Writing annotation file...")
        out_path = Path(out_path)
        write_annotations(dataset, out_path)
        vocabulary.save(vocabulary_path(out_path))
        print(f"  [OK] {out_path}")

        print(f"\nScenes:  {len(scenes)}")
        print(f"Records: {len(dataset.records)}")
        print("Caption length histogram (C incl. EOS):")
        for length, count in histogram.items():
            print(f"  C={length:<3d} {count}")

        return {
            "success": True,
            "path": str(out_path),
            "scenes": len(scenes),
            "records": len(dataset.records),
            "histogram": histogram,
            "metadata": {"processing_time_seconds": round(time.time() - start_time, 2)},
        }
    except Exception as e:
        return _failure(e)


def run_training(config: RunConfig) -> Dict[str, Any]:
    """
    Train on the dataset and write the best-BLEU checkpoint and the metrics log.

    Returns:
        Dict with success, checkpoint, metrics_log, best_epoch, best_bleu, epochs
    """
    _banner(f"TRAINING PIPELINE - {config.mode.upper()} ATTENTION")
    start_time = time.time()
    try:
        dataset_path = _require(config.paths.dataset, "dataset")
        output_dir = Path(config.paths.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        write_effective_config(config, output_dir)
        init_rng, train_rng = np.random.default_rng(config.seed).spawn(2)

        print(f"\n[STEP 1] Loading dataset {dataset_path}...")
        step1_start = time.time()
        dataset = read_annotations(dataset_path)
        training, validation, _ = prepare_examples(dataset)
        if not training:
            raise AnnotationFormatError(f"{dataset_path} holds no training records")
        if not validation:
            logger.warning("Validation split is empty; validating on the training images")
            validation = list(training)
        step1_time = time.time() - step1_start
        print(f"  [OK] Completed in {step1_time:.2f}s")
        print(f"  Train captions: {len(training)} | Validation images: {len(validation)}")

        print("\n[STEP 2] Initializing parameters...")
        dims = config.model.dims(dataset.K, dataset.D)
        params = init_params(dims, init_rng, config.model.init_scale)
        print(f"  {dims} ({params.parameter_count()} parameters)")

        print(f"\n[STEP 3] Training (optimizer: {config.training.optimizer.algorithm})...")
        step3_start = time.time()
        metrics_path = output_dir / METRICS_NAME
        metrics_path.unlink(missing_ok=True)
        result = train(training, params, config.training, validation, train_rng, metrics_log=MetricsLog(metrics_path))
        step3_time = time.time() - step3_start
        print(f"  [OK] Completed in {step3_time:.2f}s")

        print("\n[STEP 4] Writing checkpoint...")
        checkpoint = save_checkpoint(result.best_params, _checkpoint_path(config))
        print(f"  [OK] {checkpoint}")

        total_time = time.time() - start_time
        _banner("TRAINING COMPLETED")
        print(f"  Epochs run:     {len(result.metrics)}")
        print(f"  Best epoch:     {result.best_epoch}")
        for n, score in enumerate(result.best_bleu.scores, start=1):
            print(f"  BLEU-{n}:         {score:.4f}")
        if config.mode == "hard":
            print(f"  Final baseline: {result.baseline.b:.4f}")
        print(f"  TOTAL:          {total_time:6.2f}s")

        return {
            "success": True,
            "checkpoint": str(checkpoint),
            "metrics_log": str(metrics_path),
            "best_epoch": result.best_epoch,
            "best_bleu": result.best_bleu.as_dict(),
            "epochs": len(result.metrics),
            "metadata": {
                "processing_time_seconds": round(total_time, 2),
                "timing_breakdown": {"loading": round(step1_time, 2), "training": round(step3_time, 2)},
            },
        }
    except Exception as e:
        return _failure(e)


def run_captioning(
    config: RunConfig,
    viz: bool = False,
    show_references: bool = False,
    limit: Optional[int] = None
) -> Dict[str, Any]:
    """
    Caption every record of the dataset; with viz, write heatmaps and a manifest per caption.

    Returns:
        Dict with success, captions (list of dicts), captions_file, heatmap_dirs
    """
    _banner(f"CAPTIONING - {config.mode.upper()} / {config.generation.strategy.upper()}")
    try:
        dataset_path = _require(config.paths.dataset, "dataset")
        output_dir = Path(config.paths.output_dir)
        write_effective_config(config, output_dir)
        params = load_checkpoint(_require(config.paths.checkpoint, "checkpoint"))
        dataset = read_annotations(dataset_path)
        _check_compatible(params, dataset)
        vocabulary = load_vocabulary(dataset_path, config, dataset.K)
        references = {g.grid.features.tobytes(): g.references for g in group_records(dataset)}
        spec = config.data.spec
        generation, visualization = config.generation, config.visualization

        records = dataset.records[:limit] if limit else dataset.records
        streams = np.random.default_rng(config.seed).spawn(len(records)) if records else []
        print(f"\n[STEP 1] Generating {len(records)} captions...")
        step_start = time.time()
        captions: List[Dict[str, Any]] = []
        heatmap_dirs: List[str] = []
        for index, (record, stream) in enumerate(zip(records, streams)):
            caption, trace = generate(
                record.grid, params, config.mode, generation.strategy, generation.max_len, stream,
                generation.beam_width, generation.temperature, generation.sample_attention, config.model.beta_gate,
            )
            words = decode_caption(caption.tokens, vocabulary)
            entry = {"index": index, "caption": " ".join(words)}
            if show_references:
                entry["references"] = [" ".join(decode_caption(r, vocabulary)) for r in references[record.grid.features.tobytes()]]
            captions.append(entry)
            line = f"{index}\t{entry['caption']}"
            if show_references:
                line += "\t| " + " | ".join(entry["references"])
            print(line)

            if viz:
                heatmaps = render_attention(
                    trace, words=words + ["<eos>"], sigma=visualization.sigma,
                    upscale=visualization.upscale, truncate=visualization.truncate,
                )
                scene = scene_from_grid(record.grid, spec)
                base = render_scene(scene, spec, visualization.upscale) if scene is not None else None
                prefix = output_dir / "heatmaps" / f"{index:05d}"
                export_heatmaps(heatmaps, prefix, base, visualization.blend_alpha)
                heatmap_dirs.append(str(prefix))
        print(f"  [OK] Completed in {time.time() - step_start:.2f}s")

        captions_file = output_dir / "captions.tsv"
        with open(captions_file, "w", encoding="utf-8") as f:
            for entry in captions:
                f.write(f"{entry['index']}\t{entry['caption']}\n")
        return {"success": True, "captions": captions, "captions_file": str(captions_file), "heatmap_dirs": heatmap_dirs}
    except Exception as e:
        return _failure(e)


def _select_split(dataset: AnnotationDataset, split: str) -> List[TrainingExample]:
    training, validation, test = prepare_examples(dataset)
    if split == "all":
        return [
            TrainingExample(g.grid, g.records[0].caption, tuple(g.references), g.alignment)
            for g in group_records(dataset)
        ]
    if split == "train":
        return training
    return validation if split == "val" else test


def run_evaluation(
    config: RunConfig,
    split: str = "test",
    report_path: Optional[Path] = None,
    output_dir: Optional[Path] = None
) -> Dict[str, Any]:
    """
    BLEU-1..4 of greedy captions and the mean alignment score on one split.

    The alignment score reads the attention of the teacher-forced primary
    reference, whose word positions the ground-truth alignment describes.
    effective_config.yaml goes to output_dir, else next to the report, else
    to config.paths.output_dir.

    Returns:
        Dict with success, bleu, alignment, uniform_alignment, images
    """
    _banner(f"EVALUATION - {split.upper()} SPLIT")
    try:
        if output_dir is None:
            output_dir = Path(report_path).parent if report_path is not None else Path(config.paths.output_dir)
        write_effective_config(config, output_dir)
        params = load_checkpoint(_require(config.paths.checkpoint, "checkpoint"))
        dataset = read_annotations(_require(config.paths.dataset, "dataset"))
        _check_compatible(params, dataset)
        examples = _select_split(dataset, split)
        if not examples:
            raise BleuInputError(f"The {split} split is empty")

        print(f"\n[STEP 1] Captioning {len(examples)} images...")
        step_start = time.time()
        candidates: List[Sequence[int]] = []
        scores: List[Optional[float]] = []
        gate = config.model.beta_gate
        for example in examples:
            caption, _ = generate(example.grid, params, config.mode, "greedy", config.generation.max_len, gate=gate)
            candidates.append(caption.words)
            _, trace = teacher_forced_log_likelihood(example.grid, example.caption, params, config.mode, gate=gate)
            scores.append(alignment_score(trace, example.alignment))
        print(f"  [OK] Completed in {time.time() - step_start:.2f}s")

        report = bleu(candidates, [example.reference_words for example in examples])
        alignment = mean_alignment_score(scores)
        uniform = 1.0 / dataset.L
        results = {**report.as_dict(), "alignment": alignment, "uniform_alignment": uniform, "images": len(examples)}

        _banner("EVALUATION RESULTS")
        for key, value in results.items():
            print(f"  {key:<18} {value if value is None or isinstance(value, int) else f'{value:.4f}'}")
        if report_path is not None:
            report_path = Path(report_path)
            report_path.parent.mkdir(parents=True, exist_ok=True)
            with open(report_path, "w", encoding="utf-8") as f:
                f.writelines(f"{key}={'none' if value is None else value}\n" for key, value in results.items())
        return {"success": True, "bleu": report.as_dict(), "alignment": alignment, "uniform_alignment": uniform, "images": len(examples)}
    except Exception as e:
        return _failure(e)


def run_verification(level: str, seed: int, inject_fault: Optional[str] = None) -> Dict[str, Any]:
    """Run an oracle suite and print its pass/fail table."""
    _banner(f"VERIFICATION - {level.upper()}")
    start_time = time.time()
    results = run_suite(level, seed, inject_fault)
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    return {
        "success": not failed,
        "failed": failed,
        "error": f"Failed checks: {', '.join(failed)}" if failed else None,
        "error_kind": "numerical" if failed else None,
        "metadata": {"processing_time_seconds": round(time.time() - start_time, 2)},
    }
