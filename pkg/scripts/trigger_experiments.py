#!/usr/bin/env python3
"""
Batch-run named experiments through the Prefect flows

Usage:
    # every experiment in configs/experiments.yaml
    python scripts/trigger_experiments.py

    # selected experiments
    python scripts/trigger_experiments.py --experiments default badnets blended sig

    # concurrently (serial by default)
    python scripts/trigger_experiments.py --parallel
"""
import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

# 添加项目根目录到路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from configs import load_experiment_configs
from flows.experiment_flows import pf_flow_run_experiment

logger = logging.getLogger(__name__)


def trigger_single_experiment(name: str, config, artifact_root: Optional[str]) -> dict:
    try:
        run_dir = pf_flow_run_experiment(config, artifact_root)
        return {"success": True, "experiment": name, "run_dir": run_dir}
    except Exception as e:
        logger.error(f"Error running {name}: {e}")
        return {"success": False, "experiment": name, "error": str(e)}


def batch_trigger_experiments(
    experiments: Optional[List[str]] = None,
    parallel: bool = False,
    artifact_root: Optional[str] = None,
) -> dict:
    all_experiments = load_experiment_configs()

    if experiments is None:
        experiments = list(all_experiments.keys())

    invalid = [e for e in experiments if e not in all_experiments]
    if invalid:
        raise ValueError(f"Invalid experiments: {', '.join(invalid)}")

    if parallel:
        with ThreadPoolExecutor(max_workers=min(4, len(experiments))) as pool:
            results_list = list(pool.map(
                lambda name: trigger_single_experiment(name, all_experiments[name], artifact_root), experiments
            ))
    else:
        results_list = [trigger_single_experiment(name, all_experiments[name], artifact_root) for name in experiments]

    results = {r["experiment"]: r for r in results_list}
    success = sum(1 for r in results.values() if r["success"])
    return {
        "total": len(experiments),
        "success": success,
        "failed": len(experiments) - success,
        "results": results,
    }


def main():
    parser = argparse.ArgumentParser(description="Batch-run named experiments")
    parser.add_argument("--experiments", nargs="+", help="Experiment names (default: all)")
    parser.add_argument("--parallel", action="store_true", help="Run experiments concurrently (default: serial)")
    parser.add_argument("--out", help="Artifact root directory")
    args = parser.parse_args()

    mode = "parallel" if args.parallel else "serial"
    print(f"⚙️  Mode: {mode}")

    try:
        result = batch_trigger_experiments(args.experiments, args.parallel, args.out)
    except Exception as e:
        logger.error(f"Batch run failed: {e}")
        print(f"\n❌ Error: {e}")
        sys.exit(1)

    print("\n" + "=" * 60)
    print(f"Total: {result['total']}  ✅ {result['success']}  ❌ {result['failed']}")
    for name, r in result["results"].items():
        if r["success"]:
            print(f"  ✅ {name}: {r['run_dir']}")
        else:
            print(f"  ❌ {name}: {r['error']}")
    print("=" * 60)

    sys.exit(0 if result["failed"] == 0 else 1)


if __name__ == "__main__":
    main()
