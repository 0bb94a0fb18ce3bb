# tasks.py
import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from .exceptions import MissingFileError, ParameterError
from .services import oracles
from .services.attention import guidance_maps
from .services.checkpoint import load_checkpoint, save_checkpoint
from .services.dataset import (export_pgm, load_directory, pair_path, save_pair, scene_for_seed,
                               split_seeds)
from .services.denoiser import as_denoiser_fn
from .services.diffusion import PairedSample, train, write_training_log
from .services.imaging import save_grayscale, save_trajectory
from .services.metrics import aggregate, evaluate_frame, residual_stats
from .services.radar import load_raw, process_frame, save_raw, simulate_frame
from .services.sampler import heun_sample

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'model.r3dw'
TRAIN_LOG_NAME = 'train_log.csv'
METRICS_NAME = 'metrics.csv'
STATS_NAME = 'residual_stats.csv'
COMPARE_NAME = 'comparison.csv'
METRIC_FIELDS = ('frame_id', 'scene', 'cd', 'hd', 'precision', 'recall', 'fscore', 'empty_prediction')
STATS_FIELDS = ('frame_id', 'target', 'active_fraction', 'value_range', 'stddev', 'frac_within_10')


# ---------------------------
# helpers
# ---------------------------
def map_frames(fn, items, threads=1):
    """fn over items, results in input order whatever the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=min(threads, os.cpu_count() or 1)) as ex:
        futures = {ex.submit(fn, item): idx for idx, item in enumerate(items)}
        for fut in as_completed(futures):
            results[futures[fut]] = fut.result()
    return results


def split_dir(root, split):
    """``root/split`` when the dataset was written by ``synth``, else ``root`` itself."""
    root = Path(root)
    return root / split if (root / split).is_dir() else root


def scene_of(frame_id):
    return frame_id.rsplit('_', 1)[0] if '_' in frame_id else frame_id


def _fmt(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


def _write_csv(path, fields, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[field]) for field in fields])
    return path


# ---------------------------
# synth
# ---------------------------
def run_synth(config, out_dir, n_train=None, n_test=None, pgm=False, threads=1):
    """Write train/test splits of synthetic scene pairs under ``out_dir``."""
    out_dir = Path(out_dir)
    scene_cfg = config.scene_config()
    n_train = config['num_train'] if n_train is None else n_train
    n_test = config['num_test'] if n_test is None else n_test
    start = time.time()
    logger.info(f"Generating {n_train}+{n_test} '{scene_cfg.scene}' scenes into {out_dir}")

    summary = {}
    for split, seeds in zip(('train', 'test'), split_seeds(config['seed'], n_train, n_test)):
        samples = map_frames(lambda seed: scene_for_seed(scene_cfg, seed), seeds, threads)
        for sample in samples:
            save_pair(pair_path(out_dir / split, sample.frame_id), sample)
            if pgm:
                export_pgm(out_dir / split / 'pgm', sample)
        active = [float(np.mean(s.y > 0)) for s in samples]
        summary[split] = {'frames': len(samples), 'mean_active_fraction': float(np.mean(active)) if active else 0.0}
    config.dump(out_dir)
    logger.info(f"Synthesis finished in {time.time() - start:.1f}s")
    return summary


# ---------------------------
# train / sample
# ---------------------------
def run_train(config, data_dir, out_dir, mode=None):
    mode = mode or config['mode']
    config = config.with_values(mode=mode)
    out_dir = Path(out_dir)
    dataset = load_directory(split_dir(data_dir, 'train'))
    params, log = train(dataset, config.train_config(), mode)
    save_checkpoint(out_dir / CHECKPOINT_NAME, params, mode)
    write_training_log(log, out_dir / TRAIN_LOG_NAME)
    config.dump(out_dir)
    tail = log[-min(len(log), 50):]
    return {
        'mode': mode,
        'frames': len(dataset),
        'steps': len(log),
        'final_weighted_loss': float(np.mean([row.weighted_loss for row in tail])),
        'final_loss': float(np.mean([row.loss for row in tail])),
    }


def run_sample(config, checkpoint, data_dir, out_dir, threads=1):
    """Enhance every test radar image; predictions are written as pair files (x, y_hat)."""
    params, mode = load_checkpoint(checkpoint)
    denoiser = as_denoiser_fn(params)
    dataset = load_directory(split_dir(data_dir, 'test'))
    out_dir = Path(out_dir)
    fuse = mode != 'direct'
    logger.info(f"Sampling {len(dataset)} frames with a {mode} model, {config['num_steps']} Heun steps")

    def enhance(item):
        index, sample = item
        # per-frame seed keeps outputs independent of thread scheduling
        result = heun_sample(denoiser, sample.x, config.sampler_config(config['seed'] + index), fuse=fuse)
        prediction = np.clip(result.enhanced, 0.0, 1.0)
        save_pair(pair_path(out_dir, sample.frame_id), PairedSample.from_pair(sample.x, prediction, sample.frame_id))
        save_grayscale(out_dir / 'images' / f"{sample.frame_id}.png", prediction)
        if result.trajectory:
            save_trajectory(out_dir / 'trajectories' / f"{sample.frame_id}.tif", result.trajectory)
        return sample.frame_id

    frames = map_frames(enhance, enumerate(dataset), threads)
    config.with_values(mode=mode).dump(out_dir)
    return {'mode': mode, 'frames': len(frames)}


# ---------------------------
# eval / stats / compare
# ---------------------------
def run_eval(config, pred_dir, truth_dir, out_dir, threads=1):
    """Per-frame CD / HD / F-Score plus per-scene and overall means."""
    predictions = {s.frame_id: s for s in load_directory(pred_dir)}
    truths = load_directory(split_dir(truth_dir, 'test'))
    missing = [t.frame_id for t in truths if t.frame_id not in predictions]
    if missing:
        raise MissingFileError(f"no prediction for {len(missing)} frames, first {missing[0]}")

    def score(truth):
        return evaluate_frame(predictions[truth.frame_id].y, truth.y,
                              config['point_threshold'], config['fscore_tau'])

    reports = map_frames(score, truths, threads)
    rows = []
    for truth, report in zip(truths, reports):
        row = report.as_row()
        row.update(frame_id=truth.frame_id, scene=scene_of(truth.frame_id))
        rows.append(row)

    by_scene = {}
    for truth, report in zip(truths, reports):
        by_scene.setdefault(scene_of(truth.frame_id), []).append(report)
    summary = []
    for scene in sorted(by_scene):
        summary.append({**aggregate(by_scene[scene]), 'frame_id': 'mean', 'scene': scene})
    summary.append({**aggregate(reports), 'frame_id': 'mean', 'scene': 'all'})
    for row in summary:
        row['empty_prediction'] = row['empty_predictions']

    out_dir = Path(out_dir)
    _write_csv(out_dir / METRICS_NAME, METRIC_FIELDS, rows + summary)
    config.dump(out_dir)
    overall = summary[-1]
    logger.info(f"Evaluated {len(rows)} frames: CD={overall['cd']:.4f} HD={overall['hd']:.4f} "
                f"F={overall['fscore']:.4f}")
    return {'frames': rows, 'summary': summary}


def _stats_row(frame_id, target, stats):
    return {'frame_id': frame_id, 'target': target, 'active_fraction': stats.active_fraction,
            'value_range': stats.value_range, 'stddev': stats.stddev,
            'frac_within_10': stats.frac_within_10}


def _load_all(data_dir):
    root = Path(data_dir)
    splits = [root / s for s in ('train', 'test') if (root / s).is_dir()]
    return [s for d in (splits or [root]) for s in load_directory(d)]


def run_stats(config, data_dir, out_dir, attention=False):
    """Residual concentration report; the LiDAR target is profiled alongside."""
    dataset = _load_all(data_dir)
    threshold = config['activity_threshold']
    rows = []
    for sample in dataset:
        rows.append(_stats_row(sample.frame_id, 'residual', residual_stats(sample.r, threshold)))
        rows.append(_stats_row(sample.frame_id, 'lidar', residual_stats(sample.y, threshold)))
    pooled_r = residual_stats(np.concatenate([s.r for s in dataset]), threshold)
    pooled_y = residual_stats(np.concatenate([s.y for s in dataset]), threshold)
    rows.append(_stats_row('all', 'residual', pooled_r))
    rows.append(_stats_row('all', 'lidar', pooled_y))

    out_dir = Path(out_dir)
    _write_csv(out_dir / STATS_NAME, STATS_FIELDS, rows)
    if attention:
        guidance = config.guidance_config()
        for sample in dataset:
            maps = guidance_maps(sample.x, guidance)
            base = out_dir / 'attention' / sample.frame_id
            save_grayscale(f"{base}_signal.png", maps.signal)
            save_grayscale(f"{base}_consistency.png", maps.consistency)
            save_grayscale(f"{base}_attention.png", maps.attention / (guidance.lambda_s + guidance.lambda_c))
            save_grayscale(f"{base}_mask.png", maps.mask)
            save_grayscale(f"{base}_weights.png", maps.weights / guidance.alpha_low)
    config.dump(out_dir)
    logger.info(f"Residual stddev {pooled_r.stddev:.3f} vs LiDAR {pooled_y.stddev:.3f} "
                f"({pooled_r.frac_within_10:.1%} of active residuals within +-10)")
    return {'residual': pooled_r, 'lidar': pooled_y, 'frames': len(dataset)}


def read_metric_summary(path):
    """Mean rows of a metrics CSV keyed by scene."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"metrics file not found: {path}")
    with open(path, newline='') as fh:
        return {row['scene']: row for row in csv.DictReader(fh) if row['frame_id'] == 'mean'}


def run_compare(labelled_paths, out_dir=None):
    """Side-by-side method table; CD / HD change in percent against the first method."""
    if len(labelled_paths) < 2:
        raise ParameterError("compare needs at least two metrics files")
    tables = [(label, read_metric_summary(path)) for label, path in labelled_paths]
    baseline_label, baseline = tables[0]
    rows = []
    for label, table in tables:
        for scene in sorted(table):
            row = {'method': label, 'scene': scene}
            for key in ('cd', 'hd', 'fscore'):
                row[key] = float(table[scene][key])
            ref = baseline.get(scene)
            for key in ('cd', 'hd'):
                base = float(ref[key]) if ref else float('nan')
                row[f"{key}_change_pct"] = 100.0 * (row[key] - base) / base if base else float('nan')
            rows.append(row)
    if out_dir:
        fields = ('method', 'scene', 'cd', 'hd', 'fscore', 'cd_change_pct', 'hd_change_pct')
        _write_csv(Path(out_dir) / COMPARE_NAME, fields, rows)
    logger.info(f"Compared {len(tables)} methods against {baseline_label}")
    return rows


# ---------------------------
# radar / selftest
# ---------------------------
def simulate_raw_frames(config, out_dir, count, max_targets=8):
    """Random point-target ADC frames for exercising the radar chain."""
    cfg = config.radar_config()
    rng = np.random.default_rng(config['seed'])
    near = (cfg.range_lo + 2) * cfg.range_resolution
    far = min(config['bev_extent'], (cfg.range_hi - 2) * cfg.range_resolution)
    paths = []
    for index in range(count):
        targets = [(rng.uniform(near, far), rng.uniform(-0.5, 0.5) * cfg.max_velocity,
                    rng.uniform(-np.pi / 4, np.pi / 4), rng.uniform(0.5, 2.0))
                   for _ in range(int(rng.integers(1, max_targets + 1)))]
        raw = simulate_frame(targets, cfg, rng)
        paths.append(save_raw(Path(out_dir) / f"frame_{index:04d}.r3da", raw, cfg))
    return paths


def run_radar_process(config, raw_paths, out_dir, threads=1):
    """BEV / polar images and an (x, y, snr) point CSV per raw frame."""
    out_dir = Path(out_dir)
    spec = config.grid_spec()

    def process(path):
        path = Path(path)
        raw, cfg = load_raw(path, config.radar_config())
        result = process_frame(raw, cfg, spec, config['cfar_guard'], config['cfar_train'], config['cfar_pfa'])
        save_grayscale(out_dir / f"{path.stem}_bev.png", result.bev.image)
        save_grayscale(out_dir / f"{path.stem}_polar.png", result.polar)
        rows = [{'x': float(x), 'y': float(y), 'snr': float(s)} for x, y, s in result.points]
        _write_csv(out_dir / f"{path.stem}_points.csv", ('x', 'y', 'snr'), rows)
        return {'frame': path.stem, 'detections': len(result.detections), 'dropped': result.bev.dropped}

    summaries = map_frames(process, raw_paths, threads)
    config.dump(out_dir)
    return summaries


def run_selftest(names=None):
    results = oracles.run_suites(names)
    for result in results:
        logger.info(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail} ({result.seconds:.1f}s)")
    return results
