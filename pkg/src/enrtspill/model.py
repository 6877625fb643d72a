"""Domain types for egocentric-network randomized trials (ENRTs).

A trial consists of ``K`` non-overlapping networks, each with one randomized
index and zero or more network members.  Members never receive the
intervention themselves; their *spillover exposure* is the arm of the
network they belong to.  The recorded (observed) network may differ from the
true one, so the observed exposure ``g_star`` can be misclassified.

Row-level input is an :class:`EnrtRecord`; everything downstream works on the
columnar :class:`EnrtData`, which is what :func:`validate_records` returns.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EmptyTable,
    EmptyValidation,
    InconsistentExposure,
    InputError,
    MissingTrueExposure,
    MissingTrueExposureInValidation,
    OverlappingNetwork,
    SchemaError,
)

INDEX = "index"
MEMBER = "member"

CSV_REQUIRED = ("network_id", "person_id", "role", "arm", "g_star", "y", "v")
CSV_OPTIONAL = ("g", "true_network_id")


@dataclass(frozen=True)
class StudyDesign:
    """Randomization design: allocation probability and per-network arms.

    ``arms`` may be left empty, in which case the arms carried on the records
    are taken as authoritative.
    """

    allocation_prob: float
    arms: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.allocation_prob < 1.0:
            raise InputError(f"allocation_prob must lie in (0, 1), got {self.allocation_prob}")
        bad = {k: v for k, v in self.arms.items() if v not in (0, 1)}
        if bad:
            raise InputError(f"arms must be 0/1, got {bad}")

    @property
    def K(self) -> int:
        return len(self.arms)


@dataclass(frozen=True)
class EnrtRecord:
    """One participant row.

    ``g`` is the true spillover exposure when known.  Alternatively the true
    network can be given as ``true_network_id``; ``g`` is then derived from
    that network's arm during validation.  ``a`` (own intervention receipt)
    defaults to the arm for indexes and 0 for members.
    """

    network_id: str
    person_id: str
    role: str
    arm: int
    g_star: int
    y: int
    v: int = 0
    g: Optional[int] = None
    a: Optional[int] = None
    true_network_id: Optional[str] = None


@dataclass(frozen=True)
class FourfoldTable:
    """Outcome-by-exposure 2x2 table among network members.

    Cells follow the usual layout::

                 exposed   unexposed
        Y = 1       a          b        m1
        Y = 0       c          d        m0
                    n1         n0       N

    For ``exposure_kind == "observed"`` the cells are the observed-exposure
    counts (A, B, C, D).  Corrected tables may hold non-integer counts.
    """

    a: float
    b: float
    c: float
    d: float
    exposure_kind: str = "observed"

    def __post_init__(self):
        if self.exposure_kind not in ("true", "observed", "corrected"):
            raise InputError(f"unknown exposure_kind {self.exposure_kind!r}")
        if min(self.a, self.b, self.c, self.d) < 0:
            raise InputError("fourfold cells must be non-negative")

    @property
    def m1(self) -> float:
        return self.a + self.b

    @property
    def m0(self) -> float:
        return self.c + self.d

    @property
    def n1(self) -> float:
        return self.a + self.c

    @property
    def n0(self) -> float:
        return self.b + self.d

    @property
    def N(self) -> float:
        return self.a + self.b + self.c + self.d

    def cells(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)


@dataclass(frozen=True)
class ValidationTable:
    """Cross-tabulation of true (G) against observed (G*) exposure.

    Field names are ``n<G><G*>``: ``n10`` counts members with G=1, G*=0.
    """

    n11: int
    n01: int
    n10: int
    n00: int

    def __post_init__(self):
        if min(self.n11, self.n01, self.n10, self.n00) < 0:
            raise InputError("validation counts must be non-negative")

    @property
    def n1_(self) -> int:
        """Members truly exposed (denominator of sensitivity)."""
        return self.n11 + self.n10

    @property
    def n0_(self) -> int:
        """Members truly unexposed (denominator of specificity)."""
        return self.n01 + self.n00

    @property
    def n_1(self) -> int:
        return self.n11 + self.n01

    @property
    def n_0(self) -> int:
        return self.n10 + self.n00

    @property
    def n(self) -> int:
        return self.n11 + self.n01 + self.n10 + self.n00


class EnrtData:
    """Validated, columnar ENRT dataset.

    Attributes are numpy arrays, one entry per participant row. ``network``
    holds integer codes into ``network_labels``; ``g`` and ``true_network``
    use -1 for "unknown".
    """

    __slots__ = (
        "network", "network_labels", "network_arm", "person_id", "is_index",
        "a", "g_star", "g", "y", "v", "true_network", "allocation_prob",
    )

    def __init__(self, network, network_labels, network_arm, person_id, is_index,
                 a, g_star, g, y, v, true_network=None, allocation_prob=None):
        self.network = np.asarray(network, dtype=np.int64)
        self.network_labels = np.asarray(network_labels)
        self.network_arm = np.asarray(network_arm, dtype=np.int8)
        self.person_id = np.asarray(person_id)
        self.is_index = np.asarray(is_index, dtype=bool)
        self.a = np.asarray(a, dtype=np.int8)
        self.g_star = np.asarray(g_star, dtype=np.int8)
        self.g = np.asarray(g, dtype=np.int8)
        self.y = np.asarray(y, dtype=np.int8)
        self.v = np.asarray(v, dtype=np.int8)
        if true_network is None:
            true_network = np.full(self.network.shape, -1, dtype=np.int64)
        self.true_network = np.asarray(true_network, dtype=np.int64)
        self.allocation_prob = allocation_prob
        for arr in (self.a, self.g, self.y, self.v, self.g_star, self.is_index,
                    self.person_id, self.true_network):
            arr.setflags(write=False)
        self.network.setflags(write=False)
        self.network_arm.setflags(write=False)

    def __len__(self) -> int:
        return self.network.shape[0]

    def __repr__(self) -> str:
        return (f"EnrtData(rows={len(self)}, networks={self.n_networks}, "
                f"members={self.n_members}, validation={int(self.validation_mask.sum())})")

    @property
    def n_networks(self) -> int:
        return self.network_labels.shape[0]

    @property
    def member_mask(self) -> np.ndarray:
        return ~self.is_index

    @property
    def validation_mask(self) -> np.ndarray:
        return self.member_mask & (self.v == 1)

    @property
    def n_members(self) -> int:
        return int(self.member_mask.sum())

    def members(self) -> "EnrtData":
        """Member rows only (indexes dropped)."""
        return self.take(np.flatnonzero(self.member_mask))

    def take(self, rows) -> "EnrtData":
        rows = np.asarray(rows)
        return EnrtData(self.network[rows], self.network_labels, self.network_arm,
                        self.person_id[rows], self.is_index[rows], self.a[rows],
                        self.g_star[rows], self.g[rows], self.y[rows], self.v[rows],
                        self.true_network[rows], self.allocation_prob)

    def with_validation(self, v) -> "EnrtData":
        """Copy with a new validation flag vector; requires ``g`` where ``v == 1``."""
        v = np.asarray(v, dtype=np.int8)
        if np.any((v == 1) & (self.g < 0)):
            raise MissingTrueExposureInValidation("validation flag set on rows without true exposure")
        return EnrtData(self.network, self.network_labels, self.network_arm, self.person_id,
                        self.is_index, self.a, self.g_star, self.g, self.y, v,
                        self.true_network, self.allocation_prob)

    def records(self) -> list:
        out = []
        labels = self.network_labels
        for i in range(len(self)):
            tn = int(self.true_network[i])
            out.append(EnrtRecord(
                network_id=str(labels[self.network[i]]),
                person_id=str(self.person_id[i]),
                role=INDEX if self.is_index[i] else MEMBER,
                arm=int(self.network_arm[self.network[i]]),
                g_star=int(self.g_star[i]),
                y=int(self.y[i]),
                v=int(self.v[i]),
                g=None if self.g[i] < 0 else int(self.g[i]),
                a=int(self.a[i]),
                true_network_id=None if tn < 0 else str(labels[tn]),
            ))
        return out

    @classmethod
    def from_arrays(cls, network, network_arm, is_index, g_star, y, v=None, g=None,
                    a=None, person_id=None, true_network=None, network_labels=None,
                    allocation_prob=None, check=True) -> "EnrtData":
        """Build from integer-coded arrays (``network`` indexes ``network_arm``).

        When ``true_network`` is given, ``g`` is derived from that network's arm
        for every row with a known true network.
        """
        network = np.asarray(network, dtype=np.int64)
        network_arm = np.asarray(network_arm, dtype=np.int8)
        is_index = np.asarray(is_index, dtype=bool)
        n = network.shape[0]
        if network_labels is None:
            network_labels = np.arange(network_arm.shape[0])
        if person_id is None:
            person_id = np.arange(n)
        if v is None:
            v = np.zeros(n, dtype=np.int8)
        if a is None:
            a = np.where(is_index, network_arm[network], 0)
        g = np.full(n, -1, dtype=np.int8) if g is None else np.asarray(g, dtype=np.int8)
        if true_network is not None:
            true_network = np.asarray(true_network, dtype=np.int64)
            known = true_network >= 0
            derived = np.where(known, network_arm[np.where(known, true_network, 0)], -1)
            derived = np.where(is_index, 0, derived).astype(np.int8)
            clash = known & (g >= 0) & (g != derived)
            if check and np.any(clash):
                raise InconsistentExposure(
                    f"g disagrees with the true network's arm for {int(clash.sum())} row(s)")
            g = np.where(g >= 0, g, derived).astype(np.int8)
        data = cls(network, network_labels, network_arm, person_id, is_index, a,
                   g_star, g, y, v, true_network, allocation_prob)
        if check:
            _check(data)
        return data


def _check(data: EnrtData) -> None:
    if len(data) == 0:
        raise InputError("empty dataset")
    for name in ("a", "g_star", "y", "v"):
        arr = getattr(data, name)
        if np.any((arr != 0) & (arr != 1)):
            raise InputError(f"column {name!r} must be binary")
    if np.any((data.g < -1) | (data.g > 1)):
        raise InputError("column 'g' must be binary or missing")
    if np.any((data.network < 0) | (data.network >= data.n_networks)):
        raise InputError("network code out of range")

    _, counts = np.unique(data.person_id, return_counts=True)
    if np.any(counts > 1):
        ids, inv = np.unique(data.person_id, return_inverse=True)
        dup = ids[counts > 1][0]
        nets = sorted({str(data.network_labels[k]) for k in data.network[data.person_id == dup]})
        raise OverlappingNetwork(
            f"person {dup!r} appears {counts.max()} times (networks {', '.join(nets)})")

    n_idx = np.bincount(data.network[data.is_index], minlength=data.n_networks)
    if np.any(n_idx > 1):
        k = int(np.flatnonzero(n_idx > 1)[0])
        raise OverlappingNetwork(f"network {data.network_labels[k]!r} has {n_idx[k]} indexes")

    arm_of_row = data.network_arm[data.network]
    idx = data.is_index
    if np.any(data.a[idx] != arm_of_row[idx]):
        raise InconsistentExposure("index intervention receipt must equal the network arm")
    if np.any(data.g_star[idx] != 0) or np.any(data.g[idx] == 1):
        raise InconsistentExposure("indexes carry no spillover exposure (g_star = g = 0)")
    mem = ~idx
    if np.any(data.a[mem] != 0):
        raise InconsistentExposure("network members cannot receive the intervention (a = 0)")
    bad = mem & (data.g_star != arm_of_row)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InconsistentExposure(
            f"member {data.person_id[i]!r}: g_star={data.g_star[i]} but observed network "
            f"{data.network_labels[data.network[i]]!r} has arm {arm_of_row[i]}")
    if np.any((data.v == 1) & (data.g < 0) & mem):
        i = int(np.flatnonzero((data.v == 1) & (data.g < 0) & mem)[0])
        raise MissingTrueExposureInValidation(
            f"member {data.person_id[i]!r} is in the validation study but has no true exposure")


def validate_records(records: Sequence[EnrtRecord], design: Optional[StudyDesign] = None) -> EnrtData:
    """Check a list of records against the ENRT structure and return columnar data.

    Rejects overlapping membership (a person in two networks, or two indexes
    in one network), indexes with spillover exposure, members with own
    intervention receipt or with ``g_star`` disagreeing with their observed
    network's arm, and validation members lacking a true exposure.
    """
    records = list(records)
    if not records:
        raise InputError("no records supplied")

    arms: dict = dict(design.arms) if design is not None else {}
    for r in records:
        if r.role not in (INDEX, MEMBER):
            raise InputError(f"role must be 'index' or 'member', got {r.role!r}")
        if r.arm not in (0, 1):
            raise InputError(f"arm must be 0/1, got {r.arm!r} for {r.person_id!r}")
        prev = arms.setdefault(r.network_id, r.arm)
        if prev != r.arm:
            raise InconsistentExposure(f"network {r.network_id!r} has conflicting arm values")
        if r.true_network_id is not None and r.true_network_id not in arms:
            arms.setdefault(r.true_network_id, None)

    labels = sorted(arms, key=_sort_key)
    missing = [k for k in labels if arms[k] is None]
    if missing:
        raise InputError(f"true network(s) {missing} have no arm information")
    code = {k: i for i, k in enumerate(labels)}
    network_arm = np.array([arms[k] for k in labels], dtype=np.int8)

    n = len(records)
    network = np.empty(n, dtype=np.int64)
    true_network = np.full(n, -1, dtype=np.int64)
    is_index = np.empty(n, dtype=bool)
    g_star = np.empty(n, dtype=np.int8)
    y = np.empty(n, dtype=np.int8)
    v = np.empty(n, dtype=np.int8)
    g = np.full(n, -1, dtype=np.int8)
    a = np.empty(n, dtype=np.int8)
    pid = np.empty(n, dtype=object)
    for i, r in enumerate(records):
        network[i] = code[r.network_id]
        is_index[i] = r.role == INDEX
        g_star[i] = r.g_star
        y[i] = r.y
        v[i] = r.v
        if r.g is not None:
            g[i] = r.g
        elif is_index[i]:
            g[i] = 0
        a[i] = (r.arm if is_index[i] else 0) if r.a is None else r.a
        if r.true_network_id is not None:
            true_network[i] = code[r.true_network_id]
        pid[i] = r.person_id
    return EnrtData.from_arrays(
        network, network_arm, is_index, g_star, y, v=v, g=g, a=a, person_id=pid,
        true_network=true_network, network_labels=np.array(labels, dtype=object),
        allocation_prob=None if design is None else design.allocation_prob)


def _sort_key(label):
    s = str(label)
    return (0, int(s), s) if s.lstrip("-").isdigit() else (1, 0, s)


# -- CSV ------------------------------------------------------------------------

def _parse_bit(value: str, column: str, line: int, allow_blank=False) -> Optional[int]:
    value = value.strip()
    if value == "" and allow_blank:
        return None
    if value not in ("0", "1"):
        raise SchemaError(f"line {line}: column {column!r} must be 0 or 1, got {value!r}")
    return int(value)


def read_records(path) -> list:
    """Parse an ENRT CSV file into records; raises :class:`SchemaError` on bad layout."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in CSV_REQUIRED:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        has_g = "g" in header
        has_tn = "true_network_id" in header
        records = []
        for line, row in enumerate(reader, start=2):
            role = row["role"].strip().lower()
            if role not in (INDEX, MEMBER):
                raise SchemaError(f"line {line}: role must be 'index' or 'member', got {row['role']!r}")
            tn = row["true_network_id"].strip() if has_tn else ""
            records.append(EnrtRecord(
                network_id=row["network_id"].strip(),
                person_id=row["person_id"].strip(),
                role=role,
                arm=_parse_bit(row["arm"], "arm", line),
                g_star=_parse_bit(row["g_star"], "g_star", line),
                y=_parse_bit(row["y"], "y", line),
                v=_parse_bit(row["v"], "v", line),
                g=_parse_bit(row["g"], "g", line, allow_blank=True) if has_g else None,
                true_network_id=tn or None,
            ))
    if not records:
        raise SchemaError(f"{path}: no data rows")
    return records


def read_csv(path, allocation_prob: Optional[float] = None) -> EnrtData:
    design = None if allocation_prob is None else StudyDesign(allocation_prob)
    return validate_records(read_records(path), design)


def write_csv(data: EnrtData, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_REQUIRED + ("g",))
        labels = data.network_labels
        for i in range(len(data)):
            k = data.network[i]
            w.writerow([labels[k], data.person_id[i], INDEX if data.is_index[i] else MEMBER,
                        int(data.network_arm[k]), int(data.g_star[i]), int(data.y[i]),
                        int(data.v[i]), "" if data.g[i] < 0 else int(data.g[i])])


# -- summary tables -------------------------------------------------------------

def build_fourfold(data: EnrtData, exposure_kind: str = "observed") -> FourfoldTable:
    """Member-level outcome-by-exposure table (indexes are excluded)."""
    mem = data.member_mask
    if not mem.any():
        raise EmptyTable("dataset has no network members")
    if exposure_kind == "observed":
        expo = data.g_star[mem]
    elif exposure_kind == "true":
        expo = data.g[mem]
        if np.any(expo < 0):
            raise MissingTrueExposure(
                f"{int((expo < 0).sum())} member(s) lack a true exposure")
    else:
        raise InputError(f"exposure_kind must be 'true' or 'observed', got {exposure_kind!r}")
    y = data.y[mem]
    # cell index: a=0 (y1,e1), b=1 (y1,e0), c=2 (y0,e1), d=3 (y0,e0)
    cells = np.bincount(2 * (1 - y.astype(np.int64)) + (1 - expo.astype(np.int64)), minlength=4)
    return FourfoldTable(*(int(x) for x in cells), exposure_kind=exposure_kind)


def build_validation_table(data: EnrtData) -> ValidationTable:
    """(G, G*) cross-tabulation over validation members."""
    val = data.validation_mask
    if not val.any():
        raise EmptyValidation("no network members are flagged for validation")
    g = data.g[val].astype(np.int64)
    gs = data.g_star[val].astype(np.int64)
    # index: n11=0, n01=1, n10=2, n00=3
    cells = np.bincount((1 - g) + 2 * (1 - gs), minlength=4)
    return ValidationTable(n11=int(cells[0]), n01=int(cells[1]), n10=int(cells[2]), n00=int(cells[3]))


@dataclass(frozen=True)
class NetworkCounts:
    """Per-network sufficient statistics, one row per observed network.

    ``main`` columns are (A, B, C, D); ``val`` columns index
    ``[y, g_star, g]`` flattened as ``4*(1-y) + 2*(1-g_star) + (1-g)``, so
    column 0 is (y=1, g*=1, g=1).  ``size`` is the member count.
    """

    main: np.ndarray
    val: np.ndarray
    size: np.ndarray
    ysum: np.ndarray


def network_counts(data: EnrtData) -> NetworkCounts:
    mem = data.member_mask
    net = data.network[mem]
    y = data.y[mem].astype(np.int64)
    gs = data.g_star[mem].astype(np.int64)
    K = data.n_networks
    cell = 2 * (1 - y) + (1 - gs)
    main = np.bincount(net * 4 + cell, minlength=4 * K).reshape(K, 4)
    vm = data.v[mem] == 1
    g = data.g[mem].astype(np.int64)
    vcell = 4 * (1 - y[vm]) + 2 * (1 - gs[vm]) + (1 - g[vm])
    val = np.bincount(net[vm] * 8 + vcell, minlength=8 * K).reshape(K, 8)
    size = np.bincount(net, minlength=K)
    ysum = np.bincount(net, weights=y, minlength=K)
    return NetworkCounts(main=main, val=val, size=size, ysum=ysum)


def fourfold_from_cells(cells, exposure_kind="observed") -> FourfoldTable:
    a, b, c, d = (float(x) for x in cells)
    return FourfoldTable(a, b, c, d, exposure_kind=exposure_kind)


def validation_from_counts(val8) -> ValidationTable:
    """Collapse an 8-column validation row (see :class:`NetworkCounts`) over y."""
    v = np.asarray(val8).reshape(2, 2, 2).sum(axis=0)  # [g_star, g] with 1-first ordering
    return ValidationTable(n11=int(v[0, 0]), n01=int(v[0, 1]), n10=int(v[1, 0]), n00=int(v[1, 1]))


def records_from_dicts(rows: Iterable[Mapping]) -> list:
    """Convenience: ``EnrtRecord(**row)`` for each mapping."""
    return [EnrtRecord(**dict(r)) for r in rows]


# -- estimates and misclassification parameters ---------------------------------

Z95 = 1.959963984540054


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate of the average spillover effect on one scale.

    ``se`` is on the analysis scale: the risk difference itself for RD, and
    ``log(RR)`` for RR, so RR intervals are symmetric on the log scale.
    """

    scale: str
    point: float
    method: str
    se: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    variance_method: Optional[str] = None

    def __post_init__(self):
        if self.scale not in ("RD", "RR"):
            raise InputError(f"scale must be 'RD' or 'RR', got {self.scale!r}")
        if self.se is not None and not self.se >= 0:
            raise InputError(f"standard error must be non-negative, got {self.se}")

    def with_se(self, se: float, variance_method: str, level: float = 0.95) -> "EffectEstimate":
        """Attach a standard error and the matching Wald interval."""
        from scipy.stats import norm

        z = Z95 if level == 0.95 else float(norm.isf((1 - level) / 2))
        if self.scale == "RD":
            lo, hi = self.point - z * se, self.point + z * se
        else:
            lp = np.log(self.point) if self.point > 0 else -np.inf
            with np.errstate(over="ignore"):
                lo, hi = float(np.exp(lp - z * se)), float(np.exp(lp + z * se))
        return EffectEstimate(self.scale, self.point, self.method, float(se), float(lo),
                              float(hi), variance_method)

    def with_ci(self, low: float, high: float, se: Optional[float], variance_method: str) -> "EffectEstimate":
        return EffectEstimate(self.scale, self.point, self.method,
                              None if se is None else float(se), float(low), float(high),
                              variance_method)

    def covers(self, value: float) -> bool:
        return self.ci_low is not None and self.ci_low <= value <= self.ci_high

    def as_dict(self) -> dict:
        return {"scale": self.scale, "method": self.method, "variance_method": self.variance_method,
                "point": self.point, "se": self.se, "ci_low": self.ci_low, "ci_high": self.ci_high}


@dataclass(frozen=True)
class MisclassModel:
    """Sensitivity/specificity of spillover-exposure classification.

    ``n_theta``/``n_phi`` are the validation denominators behind the
    estimates (``None`` when the values are treated as known).
    """

    theta: float
    phi: float
    p_r: Optional[float] = None
    p_m: Optional[float] = None
    provenance: str = "formula"
    se_theta: Optional[float] = None
    se_phi: Optional[float] = None
    n_theta: Optional[float] = None
    n_phi: Optional[float] = None

    def __post_init__(self):
        for name in ("theta", "phi", "p_r", "p_m"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {val}")

    @classmethod
    def from_pm(cls, p_m: float, p_r: float) -> "MisclassModel":
        from .estimators import theta_phi_from_pm

        theta, phi = theta_phi_from_pm(p_m, p_r)
        return cls(theta=theta, phi=phi, p_r=p_r, p_m=p_m, provenance="formula")

    @property
    def var_theta(self) -> float:
        return 0.0 if self.se_theta is None else self.se_theta ** 2

    @property
    def var_phi(self) -> float:
        return 0.0 if self.se_phi is None else self.se_phi ** 2
