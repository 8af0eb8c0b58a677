"""Genetic search over film parameters.

The optimizer minimizes the classifier's ground-truth confidence over the
binary genotype space: evaluate the population, stop at the first individual
whose composite is misclassified, otherwise cull the worst, crossover,
mutate, repeat. All stochastic choices flow from one sequential stream seeded
by rng_seed; per-individual transform streams are derived from (rng_seed,
generation, genotype) so duplicate genotypes always score identically and
scheduling cannot perturb results.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .eot import EotConfig, apply_transform, sample_transform
from .film import FilmParams, Genotype, GenotypeSpec, ParamBounds, clamp_to_bounds
from .oracle import NotCleanSampleError, Oracle


@dataclass(frozen=True)
class GaConfig:
    """Search parameters. Defaults are the reference operating point:
    population 100, 100 generations, crossover rate 0.7, mutation rate 0.1,
    worst tenth culled per generation.
    """

    seed_count: int = 100
    step_count: int = 100
    pc: float = 0.7
    pm: float = 0.1
    cull_fraction: float = 0.1
    rng_seed: int = 0
    bounds: ParamBounds = field(default_factory=ParamBounds.default)
    eot: EotConfig = field(default_factory=EotConfig)
    mutation_mode: str = "per_individual"
    genotype: GenotypeSpec = field(default_factory=GenotypeSpec)

    def __post_init__(self) -> None:
        if self.seed_count < 1:
            raise ValueError(f"seed_count {self.seed_count} must be >= 1")
        if self.step_count < 1:
            raise ValueError(f"step_count {self.step_count} must be >= 1")
        for name, v in (("pc", self.pc), ("pm", self.pm)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if not 0.0 < self.cull_fraction < 1.0:
            raise ValueError(f"cull_fraction {self.cull_fraction} outside (0, 1)")
        if self.rng_seed < 0:
            raise ValueError(f"rng_seed {self.rng_seed} must be non-negative")
        if self.mutation_mode not in ("per_individual", "per_bit"):
            raise ValueError(f"mutation_mode {self.mutation_mode!r} unknown")

    @property
    def queries_per_evaluation(self) -> int:
        return self.eot.n_samples if self.eot.enabled else 1

    @property
    def query_budget(self) -> int:
        return self.seed_count * self.step_count * self.queries_per_evaluation

    def as_json(self) -> dict:
        return {
            "seed_count": self.seed_count,
            "step_count": self.step_count,
            "pc": self.pc,
            "pm": self.pm,
            "cull_fraction": self.cull_fraction,
            "rng_seed": self.rng_seed,
            "bounds": self.bounds.as_json(),
            "eot": self.eot.as_json(),
            "mutation_mode": self.mutation_mode,
            "color_bits": self.genotype.color_bits,
            "intensity_levels": list(self.genotype.intensity_levels),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GaConfig":
        kwargs = {
            k: obj[k]
            for k in (
                "seed_count",
                "step_count",
                "pc",
                "pm",
                "cull_fraction",
                "rng_seed",
                "mutation_mode",
            )
            if k in obj
        }
        if "bounds" in obj:
            kwargs["bounds"] = ParamBounds.from_json(obj["bounds"])
        if "eot" in obj:
            kwargs["eot"] = EotConfig.from_json(obj["eot"])
        spec_kwargs = {}
        if "color_bits" in obj:
            spec_kwargs["color_bits"] = int(obj["color_bits"])
        if "intensity_levels" in obj:
            spec_kwargs["intensity_levels"] = tuple(obj["intensity_levels"])
        if spec_kwargs:
            kwargs["genotype"] = GenotypeSpec(**spec_kwargs)
        return cls(**kwargs)


@dataclass(frozen=True)
class Individual:
    """One population member: genotype plus its fitness once evaluated.

    Fitness is the oracle's ground-truth confidence for the decoded film's
    composite (lower is fitter); None until evaluated.
    """

    genotype: Genotype
    fitness: float | None = None


@dataclass(frozen=True)
class AttackResult:
    success: bool
    best_params: FilmParams
    best_confidence: float
    adversarial_label: int | None
    queries_used: int
    generations_run: int
    best_so_far_trace: tuple[float, ...]
    clean_check_queries: int = 0
    rng_seed: int = 0

    def as_json(self) -> dict:
        return {
            "success": self.success,
            "best_params": self.best_params.as_json(),
            "best_confidence": self.best_confidence,
            "adversarial_label": self.adversarial_label,
            "queries_used": self.queries_used,
            "generations_run": self.generations_run,
            "best_so_far_trace": list(self.best_so_far_trace),
            "clean_check_queries": self.clean_check_queries,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class Evaluation:
    """Outcome of one generation's fitness pass.

    labels holds the predicted label per evaluated individual (evaluation
    index order); when the pass stopped at an adversarial individual, labels
    is shorter than the population and hit_index marks the stop.
    """

    individuals: tuple[Individual, ...]
    labels: tuple[int, ...]
    queries: int
    hit_index: int | None


def phenotype(ind: Individual, cfg: GaConfig) -> FilmParams:
    """Decode an individual and project it into the configured bounds."""
    raw = cfg.genotype.decode(ind.genotype)
    return clamp_to_bounds(raw, cfg.bounds, cfg.genotype.intensity_levels)


def _genotype_int(g: Genotype) -> int:
    v = 0
    for b in g.bits:
        v = (v << 1) | b
    return v


def _random_genotype(cfg: GaConfig, rng: np.random.Generator) -> Genotype:
    bits = rng.integers(0, 2, size=cfg.genotype.length)
    return Genotype(tuple(int(b) for b in bits))


def init_population(cfg: GaConfig, rng: np.random.Generator) -> list[Individual]:
    """seed_count individuals with i.i.d. uniform bits, unevaluated."""
    return [Individual(_random_genotype(cfg, rng)) for _ in range(cfg.seed_count)]


def _majority_label(labels: Sequence[int]) -> int:
    counts = Counter(labels)
    top = max(counts.values())
    return min(lbl for lbl, c in counts.items() if c == top)


def _evaluate_individual(
    ind: Individual,
    x: np.ndarray,
    label: int,
    oracle: Oracle,
    cfg: GaConfig,
    generation: int,
) -> tuple[float, int, int]:
    """Returns (fitness, predicted label, queries).

    Without transform averaging: one query on the plain composite. With it:
    n_samples queries on transformed composites, fitness is the mean
    ground-truth confidence and the predicted label the majority vote
    (ties toward the smaller class index).
    """
    p = phenotype(ind, cfg)
    if not cfg.eot.enabled:
        pred = oracle.classify(kernels.blend_uniform(x, p.color, p.intensity))
        if label >= len(pred.scores):
            raise ValueError(
                f"ground-truth label {label} outside oracle's {len(pred.scores)} classes"
            )
        return float(pred.scores[label]), pred.label, 1
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.rng_seed, generation, _genotype_int(ind.genotype)])
    )
    total = 0.0
    labels: list[int] = []
    for _ in range(cfg.eot.n_samples):
        t = sample_transform(cfg.eot, rng, x.shape[:2])
        pred = oracle.classify(apply_transform(x, p, t))
        if label >= len(pred.scores):
            raise ValueError(
                f"ground-truth label {label} outside oracle's {len(pred.scores)} classes"
            )
        total += float(pred.scores[label])
        labels.append(pred.label)
    return total / cfg.eot.n_samples, _majority_label(labels), cfg.eot.n_samples


def evaluate_population(
    pop: Sequence[Individual],
    x: np.ndarray,
    label: int,
    oracle: Oracle,
    cfg: GaConfig,
    generation: int = 0,
    stop_at_adversarial: bool = False,
) -> Evaluation:
    """Score the population in index order.

    With stop_at_adversarial, the pass breaks at the first misclassified
    individual and only the evaluated prefix carries fresh fitness; queries
    counts exactly the evaluations performed.
    """
    out = list(pop)
    labels: list[int] = []
    queries = 0
    hit: int | None = None
    for i, ind in enumerate(out):
        fitness, pred_label, q = _evaluate_individual(ind, x, label, oracle, cfg, generation)
        out[i] = replace(ind, fitness=fitness)
        labels.append(pred_label)
        queries += q
        if pred_label != label and stop_at_adversarial:
            hit = i
            break
    if hit is None:
        for i, lbl in enumerate(labels):
            if lbl != label:
                hit = i
                break
    return Evaluation(tuple(out), tuple(labels), queries, hit)


def check_termination(evaluation: Evaluation, label: int) -> int | None:
    """Index of the first evaluated individual predicted off the ground
    truth, or None to continue."""
    for i, lbl in enumerate(evaluation.labels):
        if lbl != label:
            return i
    return None


def select(
    pop: Sequence[Individual], cfg: GaConfig, rng: np.random.Generator
) -> list[Individual]:
    """Replace the ceil(cull_fraction * n) largest-fitness individuals with
    fresh random genotypes. Ties: the smaller index survives.
    """
    out = list(pop)
    n = len(out)
    if any(ind.fitness is None for ind in out):
        raise ValueError("select requires every individual to be evaluated")
    k = math.ceil(cfg.cull_fraction * n)
    culled = sorted(range(n), key=lambda i: (-out[i].fitness, -i))[:k]
    for i in sorted(culled):
        out[i] = Individual(_random_genotype(cfg, rng))
    return out


def crossover(
    pop: Sequence[Individual], cfg: GaConfig, rng: np.random.Generator
) -> list[Individual]:
    """Shuffle into disjoint pairs; each pair crosses with probability pc at
    a single uniform cut point strictly inside the chromosome. An odd
    leftover passes through.
    """
    out = list(pop)
    n = len(out)
    if n < 2:
        return out
    order = rng.permutation(n)
    length = cfg.genotype.length
    for k in range(0, n - 1, 2):
        i, j = int(order[k]), int(order[k + 1])
        if rng.random() >= cfg.pc:
            continue
        cut = int(rng.integers(1, length))
        a, b = out[i].genotype.bits, out[j].genotype.bits
        out[i] = Individual(Genotype(a[:cut] + b[cut:]))
        out[j] = Individual(Genotype(b[:cut] + a[cut:]))
    return out


def mutate(
    pop: Sequence[Individual], cfg: GaConfig, rng: np.random.Generator
) -> list[Individual]:
    """per_individual: with probability pm, flip exactly one uniform bit.
    per_bit: flip each bit independently with probability pm.
    """
    out = list(pop)
    length = cfg.genotype.length
    for i, ind in enumerate(out):
        bits = ind.genotype.bits
        if cfg.mutation_mode == "per_individual":
            if rng.random() < cfg.pm:
                pos = int(rng.integers(0, length))
                flipped = list(bits)
                flipped[pos] ^= 1
                out[i] = Individual(Genotype(tuple(flipped)))
        else:
            mask = rng.random(length) < cfg.pm
            if mask.any():
                flipped = [b ^ int(m) for b, m in zip(bits, mask)]
                out[i] = Individual(Genotype(tuple(flipped)))
    return out


def run_attack(
    x: np.ndarray, label: int, oracle: Oracle, cfg: GaConfig
) -> AttackResult:
    """Full search loop: evaluate / stop on first misclassification / cull /
    crossover / mutate, for at most step_count generations.

    The image must be correctly classified to begin with (one verification
    query, accounted separately from the search budget).
    """
    x = np.ascontiguousarray(x)
    clean = oracle.classify(x)
    if clean.label != label:
        raise NotCleanSampleError(
            f"not a clean sample: oracle predicts {clean.label}, ground truth {label}"
        )

    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed]))
    pop = init_population(cfg, rng)
    trace: list[float] = []
    queries = 0
    best_fit = math.inf
    best_params = phenotype(pop[0], cfg)

    for gen in range(cfg.step_count):
        ev = evaluate_population(
            pop, x, label, oracle, cfg, generation=gen, stop_at_adversarial=True
        )
        queries += ev.queries
        pop = list(ev.individuals)
        for ind in pop[: len(ev.labels)]:
            if ind.fitness < best_fit:
                best_fit = ind.fitness
                best_params = phenotype(ind, cfg)
        trace.append(best_fit)
        hit = check_termination(ev, label)
        if hit is not None:
            return AttackResult(
                success=True,
                best_params=phenotype(pop[hit], cfg),
                best_confidence=pop[hit].fitness,
                adversarial_label=ev.labels[hit],
                queries_used=queries,
                generations_run=gen + 1,
                best_so_far_trace=tuple(trace),
                clean_check_queries=1,
                rng_seed=cfg.rng_seed,
            )
        if gen < cfg.step_count - 1:
            pop = select(pop, cfg, rng)
            pop = crossover(pop, cfg, rng)
            pop = mutate(pop, cfg, rng)

    return AttackResult(
        success=False,
        best_params=best_params,
        best_confidence=best_fit,
        adversarial_label=None,
        queries_used=queries,
        generations_run=cfg.step_count,
        best_so_far_trace=tuple(trace),
        clean_check_queries=1,
        rng_seed=cfg.rng_seed,
    )
