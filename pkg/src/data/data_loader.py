import hashlib
import json
import os
import logging
import threading

import numpy as np
import pandas as pd

from src.config import load_config
from src.data.ply_io import read_ply
from src.data.point_cloud import PointCloud
from src.errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ['stimulus_id', 'reference_path', 'degraded_path', 'codec', 'rendering', 'quality', 'content']
SCORE_COLUMNS = ['stimulus_id', 'codec', 'rendering', 'quality', 'content', 'objective_value', 'mos']
QUALITY_LEVELS = ('L', 'M', 'H')
MOS_RANGE = (1.0, 5.0)
CACHE_ENV = 'CLOUDGAUGE_CACHE_DIR'


class ScorePairSet:
    """
    Objective value / MOS pairs, one row per stimulus

    Columns: stimulus_id, codec, rendering, quality, content, objective_value, mos.
    objective_value may be NaN for MOS-only significance runs.
    """

    def __init__(self, frame):
        missing = [c for c in SCORE_COLUMNS if c not in frame.columns]
        if missing:
            raise ManifestError(f"score table lacks columns {missing}")

        frame = frame[SCORE_COLUMNS].copy()
        frame['stimulus_id'] = frame['stimulus_id'].astype(str)
        for column in ('codec', 'rendering', 'quality', 'content'):
            frame[column] = frame[column].astype(str)

        duplicated = frame['stimulus_id'][frame['stimulus_id'].duplicated()]
        if len(duplicated):
            raise ManifestError(f"duplicate stimulus ids: {sorted(duplicated.unique())[:5]}")

        frame['mos'] = pd.to_numeric(frame['mos'], errors='coerce')
        frame['objective_value'] = pd.to_numeric(frame['objective_value'], errors='coerce')
        if frame['mos'].isna().any():
            raise ManifestError("mos is missing or non-numeric for some stimuli")
        low, high = MOS_RANGE
        if ((frame['mos'] < low) | (frame['mos'] > high)).any():
            raise ManifestError(f"mos values must lie in [{low}, {high}]")

        self.frame = frame.reset_index(drop=True)

    def __len__(self):
        return len(self.frame)

    @property
    def has_objective(self):
        return not self.frame['objective_value'].isna().any()

    def subset(self, codec=None, rendering=None):
        """Rows for one codec and/or rendering; 'All' or None means no filter"""
        mask = pd.Series(True, index=self.frame.index)
        if codec not in (None, 'All'):
            mask &= self.frame['codec'] == codec
        if rendering not in (None, 'All'):
            mask &= self.frame['rendering'] == rendering
        return ScorePairSet(self.frame[mask])

    def mos_groups(self, by='rendering'):
        """MOS arrays keyed by group label, in first-appearance order"""
        return {
            label: group['mos'].to_numpy(dtype=np.float64)
            for label, group in self.frame.groupby(by, sort=False)
        }

    def with_objective(self, values):
        """Copy with objective_value replaced (aligned by position)"""
        frame = self.frame.copy()
        frame['objective_value'] = np.asarray(values, dtype=np.float64)
        return ScorePairSet(frame)


class DataLoader:
    """Loads point clouds, manifests and score tables; caches parsed clouds on disk"""

    def __init__(self, config_path=None, cache_dir=None, use_cache=True):
        if config_path is None:
            possible_paths = [
                'config/toolkit_config.json',
                '../config/toolkit_config.json',
                '../../config/toolkit_config.json',
            ]

            for path in possible_paths:
                if os.path.exists(path):
                    config_path = path
                    break

        self.config_path = config_path
        self.config = self._load_config()

        cache_dir = cache_dir or os.getenv(CACHE_ENV)
        if cache_dir is None:
            project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '../..'))
            cache_dir = os.path.join(project_root, self.config['runs']['cache_dir'])
        self.use_cache = use_cache
        self.cloud_cache_dir = os.path.join(cache_dir, 'clouds')
        if use_cache:
            os.makedirs(self.cloud_cache_dir, exist_ok=True)

    def _load_config(self):
        if self.config_path is None or not os.path.exists(self.config_path):
            return load_config()
        try:
            with open(self.config_path, 'r') as f:
                return json.load(f)
        except Exception as e:
            logger.error(f"Error loading toolkit config: {e}")
            raise

    def load_cloud(self, path, precision=None):
        """Read a PLY file, reusing the parsed arrays when the file is unchanged"""
        if not os.path.exists(path):
            logger.error(f"Point cloud not found: {path}")
            raise FileNotFoundError(f"Point cloud not found: {path}")

        if not self.use_cache:
            return read_ply(path, precision=precision)

        cache_path = os.path.join(self.cloud_cache_dir, f"{self._cache_key(path, precision)}.npz")
        if os.path.exists(cache_path):
            logger.info(f"Loading cached cloud from {cache_path}")
            return self._read_cache(cache_path)

        try:
            cloud = read_ply(path, precision=precision)
        except Exception as e:
            logger.error(f"Error reading {path}: {e}")
            raise

        self._write_cache(cache_path, cloud)
        return cloud

    def load_manifest(self, path):
        """
        Read a manifest CSV; relative cloud paths resolve against its directory

        Returns:
            DataFrame in file order with absolute reference_path / degraded_path
            and a float `mos` column (NaN when absent)
        """
        frame = self._read_csv(path)
        missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
        if missing:
            raise ManifestError(f"{path}: manifest lacks columns {missing}")

        frame['stimulus_id'] = frame['stimulus_id'].astype(str)
        if frame['stimulus_id'].duplicated().any():
            raise ManifestError(f"{path}: stimulus ids must be unique")

        bad_quality = ~frame['quality'].astype(str).isin(QUALITY_LEVELS)
        if bad_quality.any():
            raise ManifestError(
                f"{path}: quality must be one of {QUALITY_LEVELS}, "
                f"got {sorted(frame.loc[bad_quality, 'quality'].astype(str).unique())}"
            )

        base_dir = os.path.dirname(os.path.abspath(path))
        for column in ('reference_path', 'degraded_path'):
            frame[column] = [
                p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))
                for p in frame[column].astype(str)
            ]

        if 'mos' in frame.columns:
            frame['mos'] = pd.to_numeric(frame['mos'], errors='coerce')
        else:
            frame['mos'] = np.nan

        logger.info(f"Loaded manifest with {len(frame)} stimuli from {path}")
        return frame

    def load_scores(self, path):
        """Read a score CSV into a ScorePairSet"""
        frame = self._read_csv(path)
        if 'objective_value' not in frame.columns:
            frame['objective_value'] = np.nan
        try:
            scores = ScorePairSet(frame)
        except ManifestError as e:
            logger.error(f"Invalid score table {path}: {e}")
            raise ManifestError(f"{path}: {e}") from e

        logger.info(f"Loaded {len(scores)} score pairs from {path}")
        return scores

    def _read_csv(self, path):
        if not os.path.exists(path):
            logger.error(f"CSV not found: {path}")
            raise FileNotFoundError(f"CSV not found: {path}")
        try:
            return pd.read_csv(path, dtype={'stimulus_id': str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            logger.error(f"Error reading CSV {path}: {e}")
            raise ManifestError(f"{path}: {e}") from e

    @staticmethod
    def _cache_key(path, precision):
        stat = os.stat(path)
        token = f"{os.path.abspath(path)}|{stat.st_size}|{stat.st_mtime_ns}|{precision}"
        return hashlib.sha1(token.encode('utf-8')).hexdigest()

    @staticmethod
    def _write_cache(cache_path, cloud):
        arrays = {'points': cloud.points}
        if cloud.has_colors:
            arrays['colors'] = cloud.colors
        if cloud.has_normals:
            arrays['normals'] = cloud.normals
        if cloud.normal_valid is not None:
            arrays['normal_valid'] = cloud.normal_valid
        arrays['meta'] = np.array([-1 if cloud.precision is None else cloud.precision, int(cloud.voxelized)])
        partial = f"{cache_path[:-4]}.{os.getpid()}.{threading.get_ident()}.partial.npz"
        try:
            np.savez(partial, **arrays)
            os.replace(partial, cache_path)
        except OSError as e:
            logger.warning(f"Could not cache cloud at {cache_path}: {e}")

    @staticmethod
    def _read_cache(cache_path):
        with np.load(cache_path) as data:
            precision, voxelized = (int(v) for v in data['meta'])
            return PointCloud(
                points=data['points'],
                colors=data['colors'] if 'colors' in data else None,
                normals=data['normals'] if 'normals' in data else None,
                precision=None if precision < 0 else precision,
                voxelized=bool(voxelized),
                normal_valid=data['normal_valid'] if 'normal_valid' in data else None,
            )

