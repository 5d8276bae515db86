"""
Verification suites over the closed-form results.

Each suite is a list of checks; a check records the gap it measured, the tolerance it was held to and the seed that
replays it. A check passes when gap < tolerance, so a tolerance override of 0 fails every check. Reports carry no
wall-clock fields: the same options give identical report bytes.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from guidefree.closedform.contrastive import (
    ContrastiveKind, brute_force_contrastive, ccdpo_optimum, dpo_optimal_reward
)
from guidefree.closedform.guidance import (
    ScoreChannel, standard_error_threshold, verify_guidance, verify_marginal_score, verify_theorem3
)
from guidefree.closedform.mclr import (
    mclr_kl_objective, mclr_objective, mclr_optimum, mclr_optimum_limit, regularizer_form2, regularizer_pairwise,
    regularizer_symmetric
)
from guidefree.closedform.simplex import brute_force_simplex
from guidefree.common.utils import ConfigError, GuidefreeError
from guidefree.lab.runs import dump_json, write_json
from guidefree.numerics.rng import derive_seed, make_rng
from guidefree.worlds.discrete import DiscreteProblem, canonical_problem, random_problem
from guidefree.worlds.mixture import default_world_1d

logger = logging.getLogger(__name__)

SUITES = ('theorem1', 'theorem2', 'theorem3', 'equivalence', 'corollaries', 'regularizers')

ORACLE_TOLERANCE = 1e-5
RECOVERY_TOLERANCE = 1e-9
KL_ORACLE_TOLERANCE = 1e-6
IDENTITY_TOLERANCE = 1e-12
STANDARD_ERRORS = 3.0

CANONICAL_OPTIMUM = (5 / 6, 1 / 6, 0.0)
CANONICAL_REWARD = np.log([1.75, 1.0, 0.25])
ETAS = (0.5, 1.0, 2.0)
BETAS = (0.5, 1.0, 2.0)
MIXTURE_ETAS = (0.1, 0.3, 0.7)
GUIDANCE_SIGMAS = (0.1, 0.5, 2.0)
COROLLARY_PROBLEMS = 20
ORACLE_ITERATIONS = 10_000


@dataclass(frozen=True)
class VerifyOptions:
    seed: int = 0
    problems: int = 100
    mc_samples: int = 100_000
    grid_points: int = 21
    grid_limit: float = 3.0
    delta: float = 1e-9
    tolerance: Optional[float] = None
    threads: int = 1

    def __post_init__(self):
        if self.problems < 1:
            raise ConfigError('problems', 'must be >= 1')
        if self.mc_samples < 2:
            raise ConfigError('mc_samples', 'must be >= 2')
        if self.grid_points < 1:
            raise ConfigError('grid_points', 'must be >= 1')
        if self.tolerance is not None and self.tolerance < 0:
            raise ConfigError('tolerance', 'must be >= 0')

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-self.grid_limit, self.grid_limit, self.grid_points)


@dataclass
class Check:
    name: str
    seed: int
    gap: Optional[float]
    tolerance: float
    passed: bool = False
    detail: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class SuiteReport:
    suite: str
    options: Dict[str, Any]
    checks: List[Check]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [check for check in self.checks if not check.passed]

    @property
    def max_gap(self) -> Dict[str, float]:
        gaps = {}
        for check in self.checks:
            if check.gap is not None:
                kind = check.name.split('[')[0]
                gaps[kind] = max(gaps.get(kind, 0.0), check.gap)
        return gaps

    def to_dict(self) -> Dict[str, Any]:
        return {
            'suite': self.suite,
            'passed': self.passed,
            'options': self.options,
            'summary': {'checks': len(self.checks), 'failed': len(self.failures), 'max_gap': self.max_gap},
            'checks': [asdict(check) for check in self.checks],
        }


Measurement = Callable[[], Dict[str, Any]]


def _check(name: str, seed: int, tolerance: float, options: VerifyOptions, measure: Measurement) -> Check:
    """
    Runs one measurement. It returns {'gap': ..., **detail}; library errors become a failed check.
    """
    tolerance = tolerance if options.tolerance is None else options.tolerance
    try:
        detail = measure()
    except GuidefreeError as e:
        logger.warning('%s (seed %d) raised %s', name, seed, e)
        return Check(name, seed, None, tolerance, False, {}, '{}: {}'.format(type(e).__name__, e))
    gap = float(detail.pop('gap'))
    conditions = detail.pop('extra_conditions', [])
    passed = bool(gap < tolerance) and all(conditions)
    return Check(name, seed, gap, tolerance, passed, _plain(detail))


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _random_setup(seed: int):
    rng = make_rng(seed)
    problem = random_problem(int(rng.integers(3, 9)), int(rng.integers(2, 4)), rng)
    return problem, rng


def _map(options: VerifyOptions, fn, items) -> List:
    with ThreadPoolExecutor(max_workers=options.threads) as pool:
        return list(pool.map(fn, items))


def theorem1(options: VerifyOptions) -> List[Check]:
    """
    Analytic optimum of the ratio-regularized objective against the projected-gradient oracle.
    """
    def canonical():
        problem = canonical_problem()
        limit = mclr_optimum_limit(problem, 0, 1.0)
        q, report = mclr_optimum(problem, 0, 1.0, 1e-12)
        oracle = brute_force_simplex(mclr_objective(problem, 0, 1.0), 3, options.delta, ORACLE_ITERATIONS,
                                     rng=make_rng(options.seed))
        gaps = [np.abs(d.probs - CANONICAL_OPTIMUM).max() for d in (limit, q, oracle)]
        return {'gap': max(gaps), 'limit': limit.probs, 'bisection': q.probs, 'oracle': oracle.probs,
                'lam': report.lam, 'iterations': report.iterations}

    checks = [_check('canonical', options.seed, ORACLE_TOLERANCE, options, canonical)]

    def one(i):
        seed = derive_seed(options.seed, 1, i)

        def measure():
            problem, rng = _random_setup(seed)
            c = int(rng.integers(problem.num_classes))
            eta = float(rng.choice(ETAS))
            q, report = mclr_optimum(problem, c, eta, options.delta)
            oracle = brute_force_simplex(mclr_objective(problem, c, eta), problem.support_size, options.delta,
                                         ORACLE_ITERATIONS, rng=rng)
            return {'gap': q.tv(oracle), 'support_size': problem.support_size, 'classes': problem.num_classes,
                    'class': c, 'eta': eta, 'lam': report.lam, 'residual': report.residual}

        return _check('oracle[{}]'.format(i), seed, ORACLE_TOLERANCE, options, measure)

    return checks + _map(options, one, range(options.problems))


def _random_reference(problem: DiscreteProblem, rng) -> np.ndarray:
    return rng.dirichlet(np.ones(problem.support_size), size=problem.num_classes).T


def theorem2(options: VerifyOptions) -> List[Check]:
    """
    Gamma-powered closed form of the class-conditional preference optimum against the optimized population objective.
    """
    def reward():
        values = dpo_optimal_reward(canonical_problem(), 0).values
        return {'gap': np.abs(values - CANONICAL_REWARD).max(), 'reward': values}

    checks = [_check('canonical_reward', options.seed, IDENTITY_TOLERANCE, options, reward)]

    def one(i):
        seed = derive_seed(options.seed, 2, i)

        def measure():
            problem, rng = _random_setup(seed)
            p_ref = _random_reference(problem, rng)
            c = int(rng.integers(problem.num_classes))
            beta = float(rng.choice(BETAS))
            q = ccdpo_optimum(problem, p_ref, c, beta)
            oracle, _ = brute_force_contrastive(problem, p_ref, c, ContrastiveKind.CCDPO, beta)
            return {'gap': q.tv(oracle), 'support_size': problem.support_size, 'class': c, 'beta': beta}

        return _check('oracle[{}]'.format(i), seed, ORACLE_TOLERANCE, options, measure)

    return checks + _map(options, one, range(options.problems))


def equivalence(options: VerifyOptions) -> List[Check]:
    """
    The preference and noise-contrastive objectives reach the same optimum when lambda normalizes the latter.
    """
    def one(i):
        seed = derive_seed(options.seed, 3, i)

        def measure():
            problem, rng = _random_setup(seed)
            p_ref = _random_reference(problem, rng)
            c = int(rng.integers(problem.num_classes))
            beta = float(rng.choice(BETAS))
            preference, _ = brute_force_contrastive(problem, p_ref, c, ContrastiveKind.CCDPO, beta)
            contrastive, mass = brute_force_contrastive(problem, p_ref, c, ContrastiveKind.CCA, beta)
            closed_form = ccdpo_optimum(problem, p_ref, c, beta)
            gap = max(preference.tv(contrastive), contrastive.tv(closed_form), abs(mass - 1.0))
            return {'gap': gap, 'tv_preference_contrastive': preference.tv(contrastive),
                    'tv_contrastive_closed_form': contrastive.tv(closed_form), 'contrastive_mass': mass,
                    'class': c, 'beta': beta}

        return _check('oracle[{}]'.format(i), seed, ORACLE_TOLERANCE, options, measure)

    return _map(options, one, range(options.problems))


def corollaries(options: VerifyOptions) -> List[Check]:
    """
    Exact recovery of the data distribution from the two matched base-model error models, plus the KL-regularized
    objective solved by the oracle.
    """
    count = min(options.problems, COROLLARY_PROBLEMS)

    def one(i):
        seed = derive_seed(options.seed, 4, i)
        problem, rng = _random_setup(seed)
        checks = []
        for eta in MIXTURE_ETAS:
            def mixture(eta=eta):
                p_ref = problem.mixture_ref(eta)
                gaps = [mclr_optimum(problem, c, eta, 1e-12, p_ref=p_ref)[0].tv(problem.table[:, c])
                        for c in range(problem.num_classes)]
                return {'gap': max(gaps), 'eta': eta}
            checks.append(_check('mixture_recovery[{}]'.format(i), seed, RECOVERY_TOLERANCE, options, mixture))
        for beta in BETAS:
            def powered(beta=beta):
                p_ref = problem.gamma_ref(beta)
                gaps = [ccdpo_optimum(problem, p_ref, c, beta).tv(problem.table[:, c])
                        for c in range(problem.num_classes)]
                return {'gap': max(gaps), 'beta': beta}
            checks.append(_check('gamma_recovery[{}]'.format(i), seed, RECOVERY_TOLERANCE, options, powered))

        def kl_oracle():
            eta = float(rng.choice(MIXTURE_ETAS))
            c = int(rng.integers(problem.num_classes))
            objective = mclr_kl_objective(problem, c, eta, problem.mixture_ref(eta))
            oracle = brute_force_simplex(objective, problem.support_size, options.delta, ORACLE_ITERATIONS, rng=rng)
            return {'gap': oracle.tv(problem.table[:, c]), 'eta': eta, 'class': c}
        checks.append(_check('kl_oracle[{}]'.format(i), seed, KL_ORACLE_TOLERANCE, options, kl_oracle))
        return checks

    return [check for checks in _map(options, one, range(count)) for check in checks]


def regularizers(options: VerifyOptions) -> List[Check]:
    """
    The symmetric, pairwise and marginal forms of the ratio regularizer agree under exact enumeration.
    """
    def one(i):
        seed = derive_seed(options.seed, 5, i)

        def measure():
            problem, rng = _random_setup(seed)
            model_table = _random_reference(problem, rng)
            pairwise = regularizer_pairwise(problem, model_table)
            symmetric = regularizer_symmetric(problem, model_table)
            form2 = regularizer_form2(problem, model_table)
            return {'gap': max(abs(symmetric - pairwise), abs(form2 - pairwise)), 'pairwise': pairwise,
                    'symmetric': symmetric, 'marginal': form2}

        return _check('forms[{}]'.format(i), seed, IDENTITY_TOLERANCE, options, measure)

    return _map(options, one, range(min(options.problems, COROLLARY_PROBLEMS)))


def theorem3(options: VerifyOptions) -> List[Check]:
    """
    Classifier-free guided scores minimize the sample-adaptively weighted objective on a 1D world. Gaps are the
    largest deviation in Monte-Carlo standard errors. Also covers guidance between two classes and the posterior-mean
    form of the marginal score.

    Every grid point of every check is one comparison; the shared threshold keeps the chance of a false failure
    anywhere in the suite at that of one 3 standard error comparison.
    """
    world = default_world_1d()
    grid = options.grid
    settings = [(eta, sigma) for eta in ETAS for sigma in GUIDANCE_SIGMAS]
    comparisons = (2 * len(settings) + len(GUIDANCE_SIGMAS)) * len(grid)
    threshold = standard_error_threshold(comparisons, options.mc_samples, STANDARD_ERRORS)

    def one(index):
        eta, sigma = settings[index]
        seed = derive_seed(options.seed, 6, index)

        def cfg():
            report = verify_theorem3(world, eta, sigma, grid, options.mc_samples, make_rng(seed))
            return {'gap': report.max_z, 'eta': eta, 'sigma': sigma, 'max_deviation': report.max_deviation,
                    'ratio_gap': report.ratio_gap, 'extra_conditions': [report.ratio_gap < IDENTITY_TOLERANCE]}

        def generic():
            report = verify_guidance(ScoreChannel(world, 0), ScoreChannel(world, 1), eta, sigma, grid,
                                     options.mc_samples, make_rng(seed))
            return {'gap': report.max_z, 'eta': eta, 'sigma': sigma, 'max_deviation': report.max_deviation,
                    'ratio_gap': report.ratio_gap, 'extra_conditions': [report.ratio_gap < IDENTITY_TOLERANCE]}

        return [_check('cfg[eta={:g},sigma={:g}]'.format(eta, sigma), seed, threshold, options, cfg),
                _check('generic[eta={:g},sigma={:g}]'.format(eta, sigma), seed, threshold, options, generic)]

    checks = [check for pair in _map(options, one, range(len(settings))) for check in pair]
    for index, sigma in enumerate(GUIDANCE_SIGMAS):
        seed = derive_seed(options.seed, 7, index)

        def marginal(sigma=sigma, seed=seed):
            deviations, errors = verify_marginal_score(world, sigma, grid, options.mc_samples, make_rng(seed))
            return {'gap': float((deviations / errors).max()), 'sigma': sigma, 'max_deviation': deviations.max()}

        checks.append(_check('marginal_score[sigma={:g}]'.format(sigma), seed, threshold, options, marginal))
    return checks


SUITE_FUNCTIONS = {
    'theorem1': theorem1,
    'theorem2': theorem2,
    'theorem3': theorem3,
    'equivalence': equivalence,
    'corollaries': corollaries,
    'regularizers': regularizers,
}


def run_suite(suite: str, options: VerifyOptions) -> SuiteReport:
    if suite not in SUITE_FUNCTIONS:
        raise ConfigError('suite', 'unknown suite {!r}, expected one of {} or all'.format(suite, ', '.join(SUITES)))
    option_dict = {k: v for k, v in asdict(options).items() if k != 'threads'}
    report = SuiteReport(suite, option_dict, SUITE_FUNCTIONS[suite](options))
    logger.info('verify %s: %s (%d checks, %d failed)', suite, 'passed' if report.passed else 'FAILED',
                len(report.checks), len(report.failures))
    for check in report.failures[:5]:
        logger.info('  %s: gap %s, tolerance %g, seed %d%s', check.name, check.gap, check.tolerance, check.seed,
                    ', ' + check.error if check.error else '')
    return report


def run_verify(suite: str, options: VerifyOptions) -> List[SuiteReport]:
    suites = SUITES if suite == 'all' else (suite,)
    return [run_suite(name, options) for name in suites]


def report_document(reports: List[SuiteReport]) -> str:
    return dump_json({
        'passed': all(r.passed for r in reports),
        'suites': {r.suite: r.to_dict() for r in reports},
    })


def write_reports(reports: List[SuiteReport], out_dir: Path) -> List[Path]:
    """One JSON report per suite plus the combined document."""
    out_dir = Path(out_dir)
    paths = [write_json(out_dir / 'verify_{}.json'.format(r.suite), r.to_dict()) for r in reports]
    combined = out_dir / 'verify.json'
    combined.write_text(report_document(reports), encoding='utf-8')
    return paths + [combined]
