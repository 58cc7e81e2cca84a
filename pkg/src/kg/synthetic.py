"""Small planted corpus with known gender skew, used by the `synth` subcommand and the tests."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from exceptions import ConfigError, ReportWriteError
from kg import slicer
from utils import get_logger

logger = get_logger(__name__)

OCCUPATION_CLASS = "Q12737077"
COUNTRY_CLASS = "Q6256"
BIRTHPLACE = "P19"


@dataclass
class PlantedCorpus:
    triples: list[tuple[str, str, str]]
    labels: dict[str, str]
    countries: tuple[str, ...]
    male_skewed: str
    female_skewed: str
    mixed: tuple[str, ...]
    humans: dict[str, str] = field(default_factory=dict)  # human -> gender id

    @property
    def occupations(self) -> tuple[str, ...]:
        return (self.male_skewed, self.female_skewed, *self.mixed)


def planted_corpus(
    seed: int = 0,
    humans_per_country: int = 100,
    countries: int = 2,
    mixed_occupations: int = 4,
    skewed_share: float = 0.4,
    cities: int = 5,
) -> PlantedCorpus:
    """Humans split evenly between countries and genders. One occupation is held
    by men and a single woman per country, one by women and a single man; the
    mixed ones are drawn regardless of gender. The single cross-gender holder
    keeps the skewed occupations eligible for the bias metrics.

    Args:
        seed (int): generator seed; the corpus is a pure function of the arguments
        humans_per_country (int): humans per country, half of each gender
        countries (int): number of citizenship countries (one demography each)
        mixed_occupations (int): occupations held by both genders
        skewed_share (float): fraction of each gender holding its skewed occupation
        cities (int): birthplaces, an extra relation the bias metrics never read

    Returns:
        PlantedCorpus: external-id triples and labels
    """
    if humans_per_country < 4 or countries < 1 or mixed_occupations < 1 or cities < 1:
        raise ConfigError("planted corpus needs 4+ humans per country and at least one country, mixed occupation and city")
    if not 0 < skewed_share <= 1:
        raise ConfigError(f"skewed_share must be in (0, 1], got {skewed_share}")

    rng = np.random.default_rng(seed)
    country_ids = tuple(f"QC{i}" for i in range(1, countries + 1))
    male_skewed, female_skewed = "QO1", "QO2"
    mixed = tuple(f"QO{i}" for i in range(3, mixed_occupations + 3))
    city_ids = [f"QB{i}" for i in range(1, cities + 1)]

    labels = {
        slicer.MALE: "male",
        slicer.FEMALE: "female",
        slicer.HUMAN: "human",
        male_skewed: "occupation held by men and one woman",
        female_skewed: "occupation held by women and one man",
    }
    labels.update({c: f"country {i}" for i, c in enumerate(country_ids, start=1)})
    labels.update({o: f"mixed occupation {i}" for i, o in enumerate(mixed, start=1)})
    labels.update({c: f"city {i}" for i, c in enumerate(city_ids, start=1)})

    triples = [(o, slicer.INSTANCE_OF, OCCUPATION_CLASS) for o in (male_skewed, female_skewed, *mixed)]
    triples += [(c, slicer.INSTANCE_OF, COUNTRY_CLASS) for c in country_ids]
    genders: dict[str, str] = {}
    n = 0
    for country in country_ids:
        for i in range(humans_per_country):
            n += 1
            human = f"QH{n}"
            gender = slicer.MALE if i % 2 == 0 else slicer.FEMALE
            genders[human] = gender
            labels[human] = f"person {n}"
            triples += [
                (human, slicer.INSTANCE_OF, slicer.HUMAN),
                (human, slicer.CITIZENSHIP, country),
                (human, slicer.GENDER, gender),
                (human, BIRTHPLACE, city_ids[int(rng.integers(cities))]),
            ]
            own, other = (male_skewed, female_skewed) if gender == slicer.MALE else (female_skewed, male_skewed)
            if rng.random() < skewed_share or i in (2, 3):
                triples.append((human, slicer.OCCUPATION, own))
            if i < 2:
                triples.append((human, slicer.OCCUPATION, other))
            held = rng.choice(len(mixed), size=int(rng.integers(1, min(2, len(mixed)) + 1)), replace=False)
            triples += [(human, slicer.OCCUPATION, mixed[j]) for j in sorted(held.tolist())]

    logger.debug("planted corpus: %d humans, %d triples", len(genders), len(triples))
    return PlantedCorpus(triples, labels, country_ids, male_skewed, female_skewed, mixed, genders)


def audit_config(corpus: PlantedCorpus, output_dir: str = "audit-out") -> dict:
    """Desk-scale audit config matching the corpus files written by `write_corpus`."""
    return {
        "corpus": {"triples": "triples.tsv", "labels": "labels.tsv"},
        "slices": [{"name": f"country{i}", "countries": [c]} for i, c in enumerate(corpus.countries, start=1)],
        "models": ["transe-l1", "complex"],
        "train": {"dim": 16, "epochs": 40, "batch_size": 64, "learning_rate": 0.05},
        "eval": {"negatives": 50, "trials": 2, "test_size": 200, "test_fraction": 0.1},
        # the corpus has only six occupations, so the K cutoffs are scaled down
        "k_values": [2, 3, 5],
        "bias": {"entropy_k": 3},
        "output_dir": output_dir,
        "seed": 0,
    }


def write_corpus(corpus: PlantedCorpus, directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    paths = {
        "triples": directory / "triples.tsv",
        "labels": directory / "labels.tsv",
        "config": directory / "config.json",
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(paths["triples"], "w", encoding="utf-8", newline="\n") as f:
            f.write("node1\tlabel\tnode2\n")
            f.writelines(f"{h}\t{r}\t{t}\n" for h, r, t in corpus.triples)
        with open(paths["labels"], "w", encoding="utf-8", newline="\n") as f:
            f.writelines(f"{k}\t{v}\n" for k, v in sorted(corpus.labels.items()))
        paths["config"].write_text(
            json.dumps(audit_config(corpus, str((directory / "audit-out").resolve())), indent=2) + "\n", encoding="utf-8"
        )
    except OSError as e:
        raise ReportWriteError(f"cannot write planted corpus to {directory}: {e}") from e
    logger.info("wrote planted corpus (%d triples) to %s", len(corpus.triples), directory)
    return paths
