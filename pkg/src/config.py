import json
import os
import logging

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'config')
THREADS_ENV = 'CLOUDGAUGE_THREADS'


def load_config(name='toolkit_config.json'):
    """Load toolkit configuration"""
    config_path = os.path.join(CONFIG_DIR, name)
    with open(config_path, 'r') as f:
        return json.load(f)


def load_dataset_config():
    """Load per-content dataset parameters (precision, octree depths)"""
    return load_config('dataset.json')


def content_parameters(content, dataset_config=None):
    """Return the dataset entry for a content name, or None if unknown"""
    dataset_config = dataset_config or load_dataset_config()
    for name, params in dataset_config['contents'].items():
        if name.lower() == str(content).lower():
            return params
    return None


def thread_count(default=1):
    """Worker count bounded by CLOUDGAUGE_THREADS"""
    raw = os.getenv(THREADS_ENV)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return default
    return max(1, value)
