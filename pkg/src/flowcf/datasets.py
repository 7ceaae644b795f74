"""Synthetic census-style fixture datasets.

Two generators mimic the shape of the public income and bank-marketing
tables: the same categorical/continuous column mix, realistic level sets,
and a logistic ground truth over level effects so that a small classifier
has real signal to learn. Sizes are desk scale and fully seeded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import Schema, Table


@dataclass
class FixtureData:
    table: Table
    y: np.ndarray
    schema: Schema
    raw_labels: np.ndarray  # original target tokens, for CSV round trips

    def __len__(self):
        return len(self.y)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# Adult-style income data: 6 categorical + 2 continuous, 28 levels in total.

_EDU_LEVELS = ("Assoc", "Bachelors", "Doctorate", "HS-grad", "Masters",
               "Prof-school", "School", "Some-college")
_EDU_EFFECT = {"School": -4.15, "HS-grad": -1.8, "Some-college": -0.8, "Assoc": 0.0,
               "Bachelors": 2.1, "Masters": 3.4, "Prof-school": 4.4, "Doctorate": 4.95}
_EDU_P = {"School": 0.13, "HS-grad": 0.32, "Some-college": 0.22, "Assoc": 0.08,
          "Bachelors": 0.16, "Masters": 0.055, "Prof-school": 0.02, "Doctorate": 0.015}

_OCC_LEVELS = ("Blue-Collar", "Other/Unknown", "Professional", "Sales", "Service",
               "White-Collar")
_OCC_EFFECT = {"Blue-Collar": -1.8, "Service": -2.35, "Other/Unknown": -1.05,
               "Sales": 0.5, "Professional": 2.1, "White-Collar": 1.55}

_WORK_LEVELS = ("Government", "Other/Unknown", "Private", "Self-Employed")
_WORK_EFFECT = {"Government": 0.5, "Other/Unknown": -1.3, "Private": 0.0,
                "Self-Employed": 0.8}
_WORK_P = (0.13, 0.06, 0.72, 0.09)

_MAR_LEVELS = ("Divorced", "Married", "Partner", "Separated", "Single", "Widowed")
_MAR_EFFECT = {"Married": 2.35, "Partner": 1.05, "Divorced": -0.8, "Single": -1.55,
               "Separated": -1.3, "Widowed": -1.05}
_MAR_P = (0.14, 0.46, 0.06, 0.03, 0.28, 0.03)

_RACE_LEVELS = ("Other", "White")
_GENDER_LEVELS = ("Female", "Male")


def _occupation_given_education(edu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # higher education shifts mass from blue-collar/service to professional
    skill = np.array([_EDU_EFFECT[e] for e in edu])
    base = np.array([0.30, 0.07, 0.13, 0.13, 0.17, 0.20])
    out = np.empty(len(edu), dtype=object)
    for i in range(len(edu)):
        p = base.copy()
        shift = 0.035 * skill[i]
        p[0] -= shift  # Blue-Collar
        p[4] -= 0.5 * shift  # Service
        p[2] += shift  # Professional
        p[5] += 0.5 * shift  # White-Collar
        p = np.clip(p, 0.01, None)
        p /= p.sum()
        out[i] = _OCC_LEVELS[rng.choice(6, p=p)]
    return out


def make_adult(n: int = 8000, seed: int = 7) -> FixtureData:
    """Income-style fixture: predicts whether income exceeds the threshold.

    Effect sizes are deliberately strong (held-out accuracy ~0.93) so the
    classifier's probability landscape has the steep, confidently-low
    region below the selection threshold that real census data shows."""
    rng = np.random.default_rng(seed)
    age = np.clip(rng.normal(38, 13, n).round(), 17, 90)
    hours = np.clip(rng.normal(40, 12, n).round(), 1, 99)
    education = rng.choice(_EDU_LEVELS, n, p=[_EDU_P[e] for e in _EDU_LEVELS])
    occupation = _occupation_given_education(education, rng)
    workclass = rng.choice(_WORK_LEVELS, n, p=_WORK_P)
    marital = rng.choice(_MAR_LEVELS, n, p=_MAR_P)
    race = rng.choice(_RACE_LEVELS, n, p=(0.15, 0.85))
    gender = rng.choice(_GENDER_LEVELS, n, p=(0.33, 0.67))

    score = (
        -3.3
        + np.array([_EDU_EFFECT[e] for e in education])
        + np.array([_OCC_EFFECT[o] for o in occupation])
        + np.array([_WORK_EFFECT[w] for w in workclass])
        + np.array([_MAR_EFFECT[m] for m in marital])
        + np.where(gender == "Male", 0.65, -0.65)
        + np.where(race == "White", 0.15, -0.15)
        + 2.35 * (age - 38.0) / 13.0
        + 2.1 * (hours - 40.0) / 12.0
    )
    y = (rng.random(n) < _sigmoid(score)).astype(np.float64)

    schema = Schema(
        target="income",
        positive_label=">50K",
        features=("race", "gender", "workclass", "education", "marital_status",
                  "occupation", "age", "hours_per_week"),
        kinds={"race": "categorical", "gender": "categorical",
               "workclass": "categorical", "education": "categorical",
               "marital_status": "categorical", "occupation": "categorical",
               "age": "continuous", "hours_per_week": "continuous"},
        immutable=("race", "gender"),
        monotonic=("age",),
    )
    table: Table = {
        "race": race.astype(object), "gender": gender.astype(object),
        "workclass": workclass.astype(object), "education": education.astype(object),
        "marital_status": marital.astype(object), "occupation": occupation.astype(object),
        "age": age.astype(np.float64), "hours_per_week": hours.astype(np.float64),
    }
    labels = np.where(y == 1.0, ">50K", "<=50K").astype(object)
    return FixtureData(table, y, schema, labels)


# ---------------------------------------------------------------------------
# Bank-style term-deposit data: 9 categorical + 7 continuous, 45 levels.

_JOB_LEVELS = ("admin", "blue-collar", "entrepreneur", "housemaid", "management",
               "retired", "self-employed", "services", "student", "technician",
               "unemployed", "unknown")
_JOB_EFFECT = {"admin": 0.1, "blue-collar": -0.4, "entrepreneur": -0.2,
               "housemaid": -0.3, "management": 0.3, "retired": 0.6,
               "self-employed": 0.0, "services": -0.25, "student": 0.7,
               "technician": 0.0, "unemployed": 0.1, "unknown": -0.1}
_MONTHS = ("apr", "aug", "dec", "feb", "jan", "jul", "jun", "mar", "may", "nov",
           "oct", "sep")
_MONTH_EFFECT = {"mar": 0.9, "sep": 0.7, "oct": 0.7, "dec": 0.5, "apr": 0.2,
                 "feb": 0.1, "aug": -0.1, "jun": -0.2, "jul": -0.3, "nov": -0.2,
                 "jan": -0.1, "may": -0.4}
_POUT_LEVELS = ("failure", "nonexistent", "other", "success", "unknown")
_POUT_EFFECT = {"failure": -0.3, "nonexistent": -0.1, "other": 0.0,
                "success": 1.4, "unknown": -0.1}


def make_bank(n: int = 6000, seed: int = 11) -> FixtureData:
    """Marketing-style fixture: predicts term-deposit subscription."""
    rng = np.random.default_rng(seed)
    job = rng.choice(_JOB_LEVELS, n)
    marital = rng.choice(("divorced", "married", "single"), n, p=(0.11, 0.57, 0.32))
    education = rng.choice(("primary", "secondary", "tertiary", "unknown"), n,
                           p=(0.14, 0.50, 0.30, 0.06))
    default = rng.choice(("no", "yes"), n, p=(0.98, 0.02))
    housing = rng.choice(("no", "yes"), n, p=(0.44, 0.56))
    loan = rng.choice(("no", "yes"), n, p=(0.84, 0.16))
    contact = rng.choice(("cellular", "telephone", "unknown"), n, p=(0.65, 0.07, 0.28))
    month = rng.choice(_MONTHS, n)
    poutcome = rng.choice(_POUT_LEVELS, n, p=(0.11, 0.45, 0.04, 0.08, 0.32))

    age = np.clip(rng.normal(41, 11, n).round(), 18, 95)
    balance = rng.normal(1400, 3000, n).round()
    day = rng.integers(1, 32, n).astype(np.float64)
    duration = np.clip(rng.gamma(2.0, 180.0, n).round(), 5, 4000)
    campaign = np.clip(rng.geometric(0.4, n), 1, 30).astype(np.float64)
    pdays = np.where(rng.random(n) < 0.75, -1.0, rng.integers(1, 400, n))
    previous = np.where(pdays < 0, 0.0, np.clip(rng.geometric(0.5, n), 1, 20))

    score = (
        -1.9
        + np.array([_JOB_EFFECT[j] for j in job])
        + np.array([_MONTH_EFFECT[m] for m in month])
        + np.array([_POUT_EFFECT[p] for p in poutcome])
        + np.where(marital == "single", 0.15, np.where(marital == "married", -0.05, 0.0))
        + np.where(education == "tertiary", 0.25, np.where(education == "primary", -0.2, 0.0))
        + np.where(housing == "yes", -0.35, 0.2)
        + np.where(loan == "yes", -0.3, 0.0)
        + np.where(contact == "cellular", 0.25, -0.15)
        + 1.1 * np.tanh((duration - 250.0) / 300.0)
        + 0.12 * (age - 41.0) / 11.0
        + 0.10 * np.tanh(balance / 3000.0)
        - 0.08 * (campaign - 2.0)
        + 0.2 * (previous > 0)
    )
    y = (rng.random(n) < _sigmoid(score)).astype(np.float64)

    schema = Schema(
        target="deposit",
        positive_label="yes",
        features=("job", "marital", "education", "default", "housing", "loan",
                  "contact", "month", "poutcome", "age", "balance", "day",
                  "duration", "campaign", "pdays", "previous"),
        kinds={**{c: "categorical" for c in ("job", "marital", "education", "default",
                                             "housing", "loan", "contact", "month",
                                             "poutcome")},
               **{c: "continuous" for c in ("age", "balance", "day", "duration",
                                            "campaign", "pdays", "previous")}},
        immutable=(),
        monotonic=(),
    )
    table: Table = {
        "job": job.astype(object), "marital": marital.astype(object),
        "education": education.astype(object), "default": default.astype(object),
        "housing": housing.astype(object), "loan": loan.astype(object),
        "contact": contact.astype(object), "month": month.astype(object),
        "poutcome": poutcome.astype(object),
        "age": age, "balance": balance, "day": day, "duration": duration,
        "campaign": campaign, "pdays": pdays.astype(np.float64), "previous": previous,
    }
    labels = np.where(y == 1.0, "yes", "no").astype(object)
    return FixtureData(table, y, schema, labels)


# ---------------------------------------------------------------------------

def make_blobs(n: int = 400, seed: int = 0, separation: float = 4.0):
    """Two 2-D gaussian blobs; linearly separable for large separation."""
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.normal((-separation / 2, 0.0), 1.0, size=(half, 2))
    b = rng.normal((separation / 2, 0.0), 1.0, size=(n - half, 2))
    X = np.vstack([a, b])
    y = np.concatenate([np.zeros(half), np.ones(n - half)])
    perm = rng.permutation(n)
    return X[perm], y[perm]


def make_two_gaussians(n: int = 2000, seed: int = 0):
    """2-D mixture used as a density-estimation toy problem (standardized)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.normal((-1.5, -0.5), (0.6, 0.9), size=(half, 2))
    b = rng.normal((1.5, 0.5), (0.9, 0.6), size=(n - half, 2))
    X = np.vstack([a, b])[rng.permutation(n)]
    return (X - X.mean(axis=0)) / X.std(axis=0)


# ---------------------------------------------------------------------------

def save_fixture(directory, fixture: FixtureData, name: str) -> tuple[Path, Path]:
    """Write `<name>.csv` + `<name>.schema.json`; returns both paths."""
    from .encoding import save_schema

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data_path = directory / f"{name}.csv"
    schema_path = directory / f"{name}.schema.json"

    schema = fixture.schema
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(schema.features) + [schema.target])
        for i in range(len(fixture)):
            row = []
            for col in schema.features:
                v = fixture.table[col][i]
                if schema.kinds[col] == "continuous":
                    f = float(v)
                    row.append(str(int(f)) if f.is_integer() else repr(f))
                else:
                    row.append(str(v))
            row.append(str(fixture.raw_labels[i]))
            writer.writerow(row)
    save_schema(schema_path, schema)
    return data_path, schema_path
