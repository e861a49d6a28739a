import pickle

import numpy as np
import pandas as pd
import pytest

from bayespilot import util
from bayespilot.config import ConfigError


def test_fingerprint_key_order():
    a = util.fingerprint({'b': 1, 'a': [1.5, 2]})
    b = util.fingerprint({'a': [1.5, 2], 'b': 1})
    assert a == b
    assert a != util.fingerprint({'a': [1.5, 2], 'b': 2})


def test_fingerprint_numpy_types():
    a = util.fingerprint({'n': np.int64(3), 'x': np.float64(0.5), 'v': np.arange(3)})
    b = util.fingerprint({'n': 3, 'x': 0.5, 'v': [0, 1, 2]})
    assert a == b


def test_canonical_json():
    assert util.canonical_json({'b': 1, 'a': 2}) == '{"a":2,"b":1}'
    with pytest.raises(TypeError):
        util.canonical_json({'a': object()})


def test_atomic_write_text(tmp_path):
    path = tmp_path / 'sub' / 'out.csv'
    util.atomic_write_text(path, 'a,b\n1,2\n')
    assert path.read_text() == 'a,b\n1,2\n'
    util.atomic_write_text(path, 'replaced\n')
    assert path.read_text() == 'replaced\n'
    assert [p.name for p in path.parent.iterdir()] == ['out.csv']


def test_frame_to_csv_full_precision():
    df = pd.DataFrame({'x': [0.1, 1 / 3]})
    text = util.frame_to_csv(df)
    values = [float(v) for v in text.splitlines()[1:]]
    assert values == [0.1, 1 / 3]


@pytest.mark.parametrize('value, expected', [
    ('0.2,0.6,0.2', [0.2, 0.6, 0.2]),
    ('0.5,', [0.5]),
    ([1, 2], [1.0, 2.0]),
])
def test_parse_float_list(value, expected):
    assert util.parse_float_list(value) == expected


def test_parse_float_grid():
    np.testing.assert_allclose(util.parse_float_grid('0:1:5'),
                               [0, 0.25, 0.5, 0.75, 1])
    assert util.parse_float_grid('0.1,0.3') == [0.1, 0.3]


@pytest.mark.parametrize('value, expected', [
    ('10:16:2', [10, 12, 14, 16]),
    ('6,12,18', [6, 12, 18]),
    ('3:5,10', [3, 4, 5, 10]),
    ([4, 8], [4, 8]),
])
def test_parse_int_list(value, expected):
    assert util.parse_int_list(value) == expected


def test_parse_int_list_invalid():
    with pytest.raises(ValueError):
        util.parse_int_list('ten')


def test_getfield():
    class Obj:
        size = 3
    assert util.getfield({'size': 1}, 'size') == 1
    assert util.getfield(pd.Series({'size': 2}), 'size') == 2
    assert util.getfield(Obj(), 'size') == 3


def test_get_cb():
    cb = util.get_cb(None)
    assert cb(0.5) == 0.5
    seen = []
    assert util.get_cb(seen.append) is not None
    util.get_cb(seen.append)(1.0)
    assert seen == [1.0]
    with pytest.raises(ValueError):
        util.get_cb('bogus')


def test_errors_pickle():
    # Errors raised inside worker processes must survive the trip back.
    for cls in (util.PilotError, util.CapacityError, ConfigError):
        error = pickle.loads(pickle.dumps(cls('too large')))
        assert type(error) is cls
        assert str(error) == 'too large'
        assert error.exit_code == cls.exit_code
