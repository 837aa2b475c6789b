"""Shared builders for synthetic mix datasets and raw split problems."""

import numpy as np
import pytest

from poroforest.dataset import Dataset, MixRecord

CONDITIONS = ("air", "water")


def random_record(i, rng, porosity):
    """One valid record with independently drawn features."""
    fly_ash = float(rng.choice([0.0, rng.uniform(5.0, 45.0)]))
    ggbs = 0.0 if fly_ash > 0 else float(rng.choice([0.0, rng.uniform(5.0, 45.0)]))
    return MixRecord(
        mix_id=f"S{i}",
        w_b=float(rng.uniform(0.3, 0.8)),
        binder=float(rng.uniform(250.0, 600.0)),
        fly_ash=fly_ash,
        ggbs=ggbs,
        sp=float(rng.uniform(0.0, 10.0)),
        ca_fa=float(rng.uniform(1.0, 3.0)),
        curing_condition=str(rng.choice(CONDITIONS)),
        curing_days=int(rng.integers(3, 366)),
        porosity=float(porosity),
    )


def synth_dataset(n, seed, porosity_fn=None) -> Dataset:
    """n records with random features; porosity from porosity_fn(features, rng)
    or uniform in [3, 20]."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        probe = random_record(i, rng, porosity=10.0)
        if porosity_fn is None:
            porosity = float(rng.uniform(3.0, 20.0))
        else:
            porosity = float(porosity_fn(probe.features(), rng))
        records.append(
            MixRecord(
                mix_id=probe.mix_id,
                w_b=probe.w_b,
                binder=probe.binder,
                fly_ash=probe.fly_ash,
                ggbs=probe.ggbs,
                sp=probe.sp,
                ca_fa=probe.ca_fa,
                curing_condition=probe.curing_condition,
                curing_days=probe.curing_days,
                porosity=porosity,
            )
        )
    return Dataset(records=tuple(records))


def random_split_problem(rng, max_n=12, max_features=3, *, integer=True,
                         allow_categorical=True):
    """A small raw (X, y, is_cat) problem for split-search oracles.

    Integer-valued X and y keep true RSS ties exact and non-ties far apart
    relative to the search's tie tolerance, so an enumeration oracle and the
    scanning implementation must agree exactly.
    """
    n = int(rng.integers(2, max_n + 1))
    p = int(rng.integers(1, max_features + 1))
    is_cat = np.zeros(p, dtype=bool)
    X = np.empty((n, p))
    for j in range(p):
        if allow_categorical and rng.random() < 0.35:
            is_cat[j] = True
            n_codes = int(rng.integers(2, 6))
            X[:, j] = rng.integers(0, n_codes, size=n)
        elif integer:
            X[:, j] = rng.integers(0, 9, size=n)
        else:
            X[:, j] = rng.normal(size=n)
    if integer:
        y = rng.integers(0, 9, size=n).astype(np.float64)
    else:
        y = rng.normal(size=n)
    return np.ascontiguousarray(X), np.ascontiguousarray(y), is_cat


@pytest.fixture(scope="session")
def corpus():
    from poroforest.dataset import load_corpus

    return load_corpus()
