import logging
log = logging.getLogger(__name__)

import hashlib
import json
import os
from pathlib import Path
import tempfile

import numpy as np
import pandas as pd


################################################################################
# Exceptions
################################################################################
class PilotError(Exception):
    '''
    Base class for all errors raised by bayespilot.

    The `exit_code` is used by the command-line front-end as the process exit
    status.
    '''
    exit_code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return self.message


class CapacityError(PilotError):
    '''
    Raised when a requested computation is too large to run on the selected
    path (e.g., exact enumeration or a hierarchical sample-size sweep).
    '''
    exit_code = 3


################################################################################
# Progress reporting
################################################################################
def get_cb(cb, suffix=None):
    '''
    Create a function that can be called iteratively to indicate progress. Must
    call with a number that indicates fraction to completion.

    cb : {'tqdm', None, callable}
        If 'tqdm', creates a text-based progressbar. If None, no progress is
        reported. A callable is returned unchanged.
    '''
    if cb is None:
        cb = lambda x: x
    elif cb == 'tqdm':
        from tqdm import tqdm
        mesg = '{l_bar}{bar}[{elapsed}<{remaining}]'
        if suffix is not None:
            mesg = mesg + ' ' + suffix
        pbar = tqdm(total=100, bar_format=mesg)
        def cb(frac):
            nonlocal pbar
            frac *= 100
            pbar.update(frac - pbar.n)
            if frac == 100:
                pbar.close()
    elif not callable(cb):
        raise ValueError(f'Unsupported callback: {cb}')
    return cb


################################################################################
# Hashing and persistence
################################################################################
def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f'Object of type {type(x).__name__} is not JSON serializable')


def canonical_json(obj):
    '''
    Serialize `obj` to JSON with sorted keys and no insignificant whitespace so
    that equal objects always produce equal strings.
    '''
    return json.dumps(obj, sort_keys=True, separators=(',', ':'),
                      default=_json_default)


def fingerprint(obj):
    '''
    SHA-256 hex digest of the canonical JSON form of `obj`

    >>> fingerprint({'b': 1, 'a': 2}) == fingerprint({'a': 2, 'b': 1})
    True
    '''
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def atomic_write_text(path, text):
    '''
    Write `text` to `path` so that readers never see a partially written file.
    '''
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.')
    try:
        with os.fdopen(fh, 'w', newline='') as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    log.debug('Wrote %s', path)


def frame_to_csv(df):
    '''
    Format a dataframe as CSV text. Floats are written with 17 significant
    digits so that reading the file back gives bit-identical values.
    '''
    return df.to_csv(index=False, float_format='%.17g', lineterminator='\n')


def parse_float_list(value):
    '''
    Parse a comma-separated list of floats (e.g., `"0.2,0.8,0"`).
    '''
    if isinstance(value, str):
        value = [v for v in value.split(',') if v.strip()]
    return [float(v) for v in value]


def parse_float_grid(value):
    '''
    Parse either a comma-separated list of floats or an evenly spaced grid
    `start:stop:num` (inclusive of both ends).

    >>> parse_float_grid('0:1:5')
    [0.0, 0.25, 0.5, 0.75, 1.0]
    '''
    if isinstance(value, str) and ':' in value:
        start, stop, num = value.split(':')
        return np.linspace(float(start), float(stop), int(num)).tolist()
    return parse_float_list(value)


def parse_int_list(value):
    '''
    Parse a comma-separated list of integers. Ranges of the form
    `start:stop:step` (inclusive of stop) are expanded.

    >>> parse_int_list('10:16:2')
    [10, 12, 14, 16]
    >>> parse_int_list('6,12,18')
    [6, 12, 18]
    '''
    if not isinstance(value, str):
        return [int(v) for v in value]
    result = []
    for token in value.split(','):
        token = token.strip()
        if not token:
            continue
        if ':' in token:
            parts = [int(p) for p in token.split(':')]
            start, stop = parts[:2]
            step = parts[2] if len(parts) == 3 else 1
            result.extend(range(start, stop + 1, step))
        else:
            result.append(int(token))
    return result


def getfield(obj, name):
    '''
    Look up `name` on a mapping, dataframe or object with attributes.
    '''
    if isinstance(obj, (dict, pd.DataFrame, pd.Series)):
        return obj[name]
    return getattr(obj, name)
