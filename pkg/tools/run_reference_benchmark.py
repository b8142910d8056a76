#!/usr/bin/env python3
"""
Reference Benchmark

Trains the full model on the seed-42 synthetic benchmark (300 train / 100
test sequences), evaluates it, compares adaptive and static triggers on the
seed-43 two-regime stress set, runs the ablation matrix and repeats the
training to confirm byte-identical checkpoints.

Usage: python3 tools/run_reference_benchmark.py [output_dir] [--skip-ablation] [--skip-repeat]
"""

import argparse
import os
import sys
import time
from dataclasses import asdict

# Add parent directory to path to import from src
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from src.ablation import run_ablation
from src.checkpoint_storage import checkpoint_storage
from src.config import Config, EvalConfig, ModelConfig, ScenarioConfig, TrainConfig
from src.evaluation import adaptive_alert_eval, evaluate
from src.export_manager import export_manager
from src.scenario_sim import generate_benchmark, generate_stress_set
from src.training import Trainer
from src.utils.helpers import configure_determinism, configure_logging, file_checksum

REFERENCE_SEED = 42
STRESS_SEED = 43

# minimum values for the headline metrics
TARGETS = {'ap': 0.90, 'auc': 0.90, 'mtta_s': 1.0}
MAX_FALSE_ALARM_RATE = 0.10
MIN_TTA_ADVANTAGE_S = 0.1
MIN_ABLATION_GAP = 0.02


def check(name, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return passed


def train_reference(train_set, output_dir, tag):
    """Train the full model and save its checkpoint"""
    trainer = Trainer(TrainConfig(seed=REFERENCE_SEED), ModelConfig(),
                      log_path=os.path.join(output_dir, f'{tag}.log.jsonl'))
    result = trainer.train(train_set)
    path = os.path.join(output_dir, f'{tag}.camr')
    checkpoint_storage.save(path, result.model)
    return result.model, path


def main():
    parser = argparse.ArgumentParser(description='Run the reference benchmark')
    parser.add_argument('output_dir', nargs='?', default=Config.get_data_path('benchmark'),
                        help='Output directory (default: CAMERA_DATA_DIR/benchmark)')
    parser.add_argument('--skip-ablation', action='store_true')
    parser.add_argument('--skip-repeat', action='store_true')
    args = parser.parse_args()

    configure_logging()
    configure_determinism(1)
    os.makedirs(args.output_dir, exist_ok=True)
    started = time.time()
    results = []

    train_set, test_set = generate_benchmark(REFERENCE_SEED, 300, 100, 0.4, ScenarioConfig())
    model, checkpoint = train_reference(train_set, args.output_dir, 'reference')
    report = evaluate(model.trace(test_set), EvalConfig())
    export_manager.write_json(os.path.join(args.output_dir, 'reference_report.json'), report.to_dict())
    for key, target in TARGETS.items():
        value = getattr(report, key)
        results.append(check(key, value is not None and value >= target, f"{value} (target >= {target})"))
    fa = report.false_alarm_rate
    results.append(check('false_alarm_rate', fa is not None and fa <= MAX_FALSE_ALARM_RATE,
                         f"{fa} (target <= {MAX_FALSE_ALARM_RATE})"))

    stress = generate_stress_set(STRESS_SEED, 100, ScenarioConfig())
    comparison = adaptive_alert_eval(model.trace(stress))
    export_manager.write_json(os.path.join(args.output_dir, 'stress_comparison.json'), asdict(comparison))
    results.append(check('stress recall', comparison.recall >= comparison.static_recall,
                         f"adaptive {comparison.recall} vs static {comparison.static_recall}"))
    results.append(check('stress false alarms', comparison.false_alarm_rate <= comparison.static_false_alarm_rate,
                         f"adaptive {comparison.false_alarm_rate} vs static {comparison.static_false_alarm_rate}"))
    advantage = comparison.tta_advantage_s
    results.append(check('stress TTA advantage', advantage is not None and advantage >= MIN_TTA_ADVANTAGE_S,
                         f"{advantage} s (target >= {MIN_TTA_ADVANTAGE_S})"))

    if not args.skip_repeat:
        _, repeat = train_reference(train_set, args.output_dir, 'repeat')
        results.append(check('checkpoint determinism', file_checksum(checkpoint) == file_checksum(repeat),
                             f"{file_checksum(checkpoint)[:12]} vs {file_checksum(repeat)[:12]}"))

    if not args.skip_ablation:
        ablation = run_ablation(train_set, test_set, TrainConfig(seed=REFERENCE_SEED), ModelConfig(), EvalConfig())
        export_manager.write_markdown(os.path.join(args.output_dir, 'ablation.md'), ablation.to_markdown())
        modules = {row.variant: row.ap for row in ablation.table('module')}
        full = modules.get('full')
        for variant in ('no_mfe', 'no_ahf', 'no_bigru'):
            value = modules.get(variant)
            passed = full is not None and value is not None and full - value >= MIN_ABLATION_GAP
            results.append(check(f'ablation {variant}', passed, f"full {full} vs {value}"))
        results.append(check('drop rate 0 reproduces base run', bool(ablation.baseline_identical),
                             str(ablation.baseline_identical)))

    print(f"\n{sum(results)}/{len(results)} checks passed in {time.time() - started:.0f}s")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
