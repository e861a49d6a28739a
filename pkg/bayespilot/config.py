'''
JSON scenario configuration and run manifests

A configuration file describes one pilot scenario. Conjugate example::

    {
        "model": "conjugate",
        "n_per_arm": 30,
        "design_prior": {
            "p_f": {"dist": "beta", "alpha": 40, "beta": 10},
            "p_a": {"dist": "beta", "alpha": 11.2, "beta": 4.8}
        },
        "analysis_prior": "uniform",
        "partition": {"followup_threshold": 0.8, "adherence_threshold": 0.7},
        "N": 10000,
        "seed": 1
    }

Hierarchical example::

    {
        "model": "hierarchical",
        "k": 6,
        "analysis_prior": {"preset": "INA"},
        "mcmc": {"iterations": 1000, "burnin": 500},
        "N": 500
    }

Omitted blocks take the defaults of the model. See the documentation for the
full schema.
'''
import logging
log = logging.getLogger(__name__)

from dataclasses import asdict, dataclass, field
import datetime as dt
import json
from pathlib import Path
from typing import Any, Optional

from .conjugate import ConjugateScenario
from .hierarchical import (
    AnalysisPriorSpec, DesignPrior, HierScenario, HypothesisPartition
)
from .mcmc import McmcConfig
from .stats import DistSpec, RngStream
from .util import PilotError, atomic_write_text, fingerprint


class ConfigError(PilotError, ValueError):
    exit_code = 2


MODELS = ('conjugate', 'hierarchical')

COMMON_KEYS = {'model', 'design_prior', 'analysis_prior', 'partition', 'N',
               'seed', 'threads', 'max_unconverged_fraction',
               'max_posterior_draws'}

MODEL_KEYS = {
    'conjugate': COMMON_KEYS | {'n_per_arm'},
    'hierarchical': COMMON_KEYS | {'k', 'mcmc'},
}

CONJUGATE_PRIOR_KEYS = {'p_f', 'p_a'}
CONJUGATE_PARTITION_KEYS = {'followup_threshold', 'adherence_threshold'}


def _int(d, key, default, minimum):
    value = d.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f'"{key}" must be an integer of at least {minimum}, got {value!r}')
    return value


@dataclass
class ScenarioConfig:
    '''
    Validated scenario configuration

    Only the keys given in the file are stored; defaults are filled in when
    the scenario is built. `resolved()` returns the complete configuration
    including defaults.
    '''
    model: str
    size: int
    design_prior: dict = field(default_factory=dict)
    analysis_prior: Any = None
    partition: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    N: int = 10000
    seed: int = 0
    threads: Optional[int] = None
    max_unconverged_fraction: float = 0.05
    max_posterior_draws: float = 1e9

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError('Configuration must be a JSON object')
        model = d.get('model')
        if model not in MODELS:
            raise ConfigError(f'"model" must be one of {MODELS}, got {model!r}')
        extra = set(d) - MODEL_KEYS[model]
        if extra:
            raise ConfigError(f'Unknown configuration keys for the {model} model: {sorted(extra)}')

        size_key = 'n_per_arm' if model == 'conjugate' else 'k'
        default_size = 30 if model == 'conjugate' else 6
        for key in ('design_prior', 'partition', 'mcmc'):
            if key in d and not isinstance(d[key], dict):
                raise ConfigError(f'"{key}" must be a JSON object')

        threads = d.get('threads')
        if threads is not None:
            threads = _int(d, 'threads', None, 1)
        fraction = d.get('max_unconverged_fraction', 0.05)
        if not isinstance(fraction, (int, float)) or not (0 <= fraction <= 1):
            raise ConfigError(f'"max_unconverged_fraction" must be in [0, 1], got {fraction!r}')
        max_draws = d.get('max_posterior_draws', 1e9)
        if not isinstance(max_draws, (int, float)) or max_draws <= 0:
            raise ConfigError(f'"max_posterior_draws" must be positive, got {max_draws!r}')

        config = cls(
            model=model,
            size=_int(d, size_key, default_size, 1),
            design_prior=dict(d.get('design_prior', {})),
            analysis_prior=d.get('analysis_prior'),
            partition=dict(d.get('partition', {})),
            mcmc=dict(d.get('mcmc', {})),
            N=_int(d, 'N', 10000, 1),
            seed=_int(d, 'seed', 0, 0),
            threads=threads,
            max_unconverged_fraction=float(fraction),
            max_posterior_draws=float(max_draws),
        )
        # Validates every block
        config.build_scenario()
        return config

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f'Configuration file {path} not found') from None
        except json.JSONDecodeError as e:
            raise ConfigError(f'Configuration file {path} is not valid JSON: {e}') from None
        return cls.from_dict(d)

    def build_scenario(self):
        try:
            if self.model == 'conjugate':
                return self._build_conjugate()
            return self._build_hierarchical()
        except ConfigError:
            raise
        except (PilotError, TypeError, ValueError) as e:
            raise ConfigError(f'Invalid {self.model} configuration: {e}') from None

    def _build_conjugate(self):
        extra = set(self.design_prior) - CONJUGATE_PRIOR_KEYS
        if extra:
            raise ConfigError(f'Unknown design prior components: {sorted(extra)}')
        extra = set(self.partition) - CONJUGATE_PARTITION_KEYS
        if extra:
            raise ConfigError(f'Unknown partition settings: {sorted(extra)}')
        kwargs = dict(self.partition)
        for key, value in self.design_prior.items():
            kwargs[f'design_prior_{key[-1]}'] = DistSpec.from_dict(value)
        analysis = self.analysis_prior
        if analysis is None or analysis == 'uniform':
            pass
        elif isinstance(analysis, dict):
            extra = set(analysis) - CONJUGATE_PRIOR_KEYS
            if extra:
                raise ConfigError(f'Unknown analysis prior components: {sorted(extra)}')
            for key, value in analysis.items():
                kwargs[f'analysis_prior_{key[-1]}'] = DistSpec.from_dict(value)
        else:
            raise ConfigError(f'The conjugate analysis prior must be "uniform" or a mapping, got {analysis!r}')
        return ConjugateScenario(n_per_arm=self.size, **kwargs)

    def _build_hierarchical(self):
        design_prior = DesignPrior.from_dict(self.design_prior)
        analysis = 'WI' if self.analysis_prior is None else self.analysis_prior
        return HierScenario(
            k=self.size,
            design_prior=design_prior,
            analysis_prior=AnalysisPriorSpec.from_config(analysis, design_prior),
            partition=HypothesisPartition.from_dict(self.partition),
            mcmc=McmcConfig.from_dict(self.mcmc),
        )

    def replace(self, **kwargs):
        d = asdict(self)
        d.update({k: v for k, v in kwargs.items() if v is not None})
        return ScenarioConfig(**d)

    def resolved(self):
        '''
        Complete configuration with defaults filled in. `threads` is omitted
        since results do not depend on it.
        '''
        d = self.build_scenario().as_dict()
        d.update({
            'N': self.N,
            'seed': self.seed,
            'max_unconverged_fraction': self.max_unconverged_fraction,
            'max_posterior_draws': self.max_posterior_draws,
        })
        return d

    @property
    def fingerprint(self):
        return fingerprint(self.resolved())

    @property
    def stream(self):
        return RngStream(self.seed)


@dataclass
class RunManifest:
    '''
    Provenance record written next to every output file
    '''
    command: str
    config_hash: Optional[str]
    seed: Optional[int]
    version: str
    started: str
    finished: Optional[str] = None
    outputs: list = field(default_factory=list)

    @classmethod
    def start(cls, command, config=None, seed=None):
        from . import __version__
        return cls(
            command=command,
            config_hash=None if config is None else config.fingerprint,
            seed=seed if config is None else config.seed,
            version=__version__,
            started=_now(),
        )

    def finish(self, *outputs):
        self.outputs.extend(str(o) for o in outputs)
        self.finished = _now()

    @staticmethod
    def path_for(output):
        output = Path(output)
        return output.with_name(output.name + '.manifest.json')

    def write(self, output):
        path = self.path_for(output)
        atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True) + '\n')
        return path

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec='seconds')
