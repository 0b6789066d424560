from flask import Blueprint, jsonify, request
import math
import os
from pathlib import Path
import numpy as np
from Classes.Base import Config
from Classes.Pipeline.PipelineClass import Pipeline

pipeline_api = Blueprint('PipelineRoute', __name__)

# request keys that name files or folders, all relative to DATA_STORAGE
PATH_KEYS = ('out', 'poses', 'archive', 'index', 'checkpoint', 'ground_truth', 'scan')
PATH_LIST_KEYS = ('scans', 'sources', 'targets')


def _storage_path(value):
    return Path(Config.validate_path(Config.DATA_STORAGE, value))


def _payload():
    """Split a JSON body into resolved paths and pipeline settings."""
    body = dict(request.get_json(silent=True) or {})
    paths = {}
    for key in PATH_KEYS:
        if body.get(key) is not None:
            paths[key] = _storage_path(body.pop(key))
    for key in PATH_LIST_KEYS:
        if body.get(key) is not None:
            paths[key] = [_storage_path(v) for v in body.pop(key)]
    options = {key: body.pop(key) for key in ('split', 'filter', 'radii', 'sampling_radii') if key in body}
    workers = body.pop('workers', None)
    pipeline = Pipeline(body.pop('settings', None) or body, workers)
    return pipeline, paths, options


def _missing(paths, *keys):
    absent = [k for k in keys if k not in paths]
    if absent:
        return jsonify({'message': f"Missing field(s): {', '.join(absent)}", 'status_code': 'error'}), 400
    return None


def _json_safe(value):
    """JSON has no NaN or infinity; missing errors go out as null."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _done(message, summary):
    response = {"message": message, "status_code": "success"}
    response.update(_json_safe(summary))
    return jsonify(response), 200


@pipeline_api.route("/runs", methods=['GET'])
def runs():
    try:
        storage = Path(Config.DATA_STORAGE)
        folders = sorted(f.name for f in os.scandir(storage) if f.is_dir()) if storage.is_dir() else []
        return jsonify(folders), 200
    except(IOError):
        return jsonify('No existing runs!'), 404


@pipeline_api.route("/synth", methods=['POST'])
def synth():
    pipeline, paths, _ = _payload()
    return _missing(paths, 'out') or _done("Synthetic scans written!", pipeline.synth(paths['out']))


@pipeline_api.route("/extract", methods=['POST'])
def extract():
    pipeline, paths, _ = _payload()
    return _missing(paths, 'scans', 'poses', 'out') or _done(
        "Patches extracted!", pipeline.extract(paths['scans'], paths['poses'], paths['out']))


@pipeline_api.route("/train", methods=['POST'])
def train():
    pipeline, paths, _ = _payload()
    return _missing(paths, 'archive', 'out') or _done(
        "Training finished!", pipeline.train(paths['archive'], paths['out'], paths.get('index')))


@pipeline_api.route("/evaluate", methods=['POST'])
def evaluate():
    pipeline, paths, options = _payload()
    missing = _missing(paths, 'checkpoint', 'archive', 'out')
    if missing:
        return missing
    summary = pipeline.evaluate(paths['checkpoint'], paths['archive'], paths['out'], options.get('split', 'all'),
                                paths.get('index'))
    return _done("Evaluation finished!", {"splits": summary})


@pipeline_api.route("/align", methods=['POST'])
def align():
    pipeline, paths, options = _payload()
    return _missing(paths, 'sources', 'targets', 'checkpoint', 'out') or _done(
        "Alignment finished!",
        pipeline.align(paths['sources'], paths['targets'], paths['checkpoint'], paths['out'],
                       paths.get('ground_truth'), options.get('filter', 'both')))


@pipeline_api.route("/bench", methods=['POST'])
def bench():
    pipeline, paths, options = _payload()
    missing = _missing(paths, 'scan', 'checkpoint', 'out')
    if missing:
        return missing
    summary = pipeline.bench(paths['scan'], paths['checkpoint'], paths['out'],
                             options.get('radii', Config.NEIGHBORHOOD_RADII),
                             options.get('sampling_radii', Config.SAMPLING_RADII))
    return _done("Timing finished!", summary)
