"""Validate configs/experiments.yaml against the config types"""
import sys
from pathlib import Path

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from configs import load_experiment_configs
from reidlab.core.stegocodec import StegoParams, capacity


def main():
    print("Validating configurations...")

    try:
        experiment_configs = load_experiment_configs()
        print(f"✅ Experiment configs: {len(experiment_configs)} experiments loaded")
    except Exception as e:
        print(f"❌ Experiment configs validation failed: {e}")
        sys.exit(1)

    # The codec must fit the payload into every configured raster size
    failed = False
    for name, config in experiment_configs.items():
        params = StegoParams.from_config(config.stego, config.hashnet.code_length)
        slots = capacity(config.dataset.height, config.dataset.width, params)
        if slots < params.required_slots:
            print(f"❌ {name}: codec capacity {slots} < {params.required_slots} slots needed")
            failed = True
        else:
            print(f"   - {name} (hash {config.config_hash()}, capacity {slots}/{params.required_slots})")
    if failed:
        sys.exit(1)

    print("\n✅ All configurations are valid!")


if __name__ == "__main__":
    main()
