"""Synthetic dataset generation, persistence, target encoding and splits.

A dataset is an ordered list of samples, each holding the three measurement
matrices of one probe run plus its label set (1 to 3 load classes).  Sample
order is deterministic: singles in class index order, then two-load
combinations in index order, then three-load combinations, with per-sample
seeds derived by hashing (master_seed, combo_id, sample index).  Because
every sample is simulated independently of every other, generation can be
chunked across processes without changing a single byte of the output.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptRecord,
    EmptyLabelSet,
    InsufficientSamples,
    NonConvergence,
    SchemaVersionMismatch,
    SimulationError,
    TooManyLabels,
)
from .loads import (
    ApplianceType,
    JitterSpec,
    LoadClass,
    N_CLASSES,
    drift,
    instantiate_batch,
    instantiate_resistor,
    stack_models,
)
from .probe import DimmingSchedule, MeasurementMatrices, _MaskedMember, run_probe_members
from .waveform import SupplyConfig

SCHEMA = "plugprobe.dataset/1"

# Seconds of wall time between consecutive measurements of one appliance;
# drives the accumulated Type III drift of the j-th sample.
DEFAULT_SAMPLE_GAP_S = 10.0

# Stand-in wattages for the pure-resistor oracle datasets: 2^k + 1 so every
# 1-, 2- and 3-class combination has a distinct total power.
RESISTOR_ORACLE_POWERS_W = {c: float(2 ** (i + 1) + 1) for i, c in enumerate(LoadClass)}


def validate_label_set(labels) -> frozenset:
    lset = frozenset(labels)
    if len(lset) == 0:
        raise EmptyLabelSet("a sample needs at least one load class")
    if len(lset) > 3:
        raise TooManyLabels(f"at most 3 simultaneous loads, got {len(lset)}")
    for c in lset:
        if not isinstance(c, LoadClass):
            raise TypeError(f"label set entries must be LoadClass, got {c!r}")
    return lset


def combo_id_for(labels) -> str:
    """Canonical combination key: sorted class labels joined by '+'."""
    return "+".join(sorted(c.label for c in validate_label_set(labels)))


@dataclass
class Sample:
    matrices: MeasurementMatrices
    labels: frozenset
    combo_id: str = ""

    def __post_init__(self):
        self.labels = validate_label_set(self.labels)
        derived = combo_id_for(self.labels)
        if self.combo_id and self.combo_id != derived:
            raise ValueError(f"combo_id '{self.combo_id}' does not match labels")
        self.combo_id = derived


class Dataset:
    """Ordered collection of samples with per-combination indexing."""

    def __init__(self, samples=None):
        self.samples: list[Sample] = list(samples or [])

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def by_combo(self) -> dict:
        out: dict[str, list[int]] = {}
        for i, s in enumerate(self.samples):
            out.setdefault(s.combo_id, []).append(i)
        return out

    def combo_ids(self) -> list:
        seen = dict.fromkeys(s.combo_id for s in self.samples)
        return list(seen)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices])


def all_two_load_combos() -> list:
    """All 55 unordered class pairs, in class index order."""
    return [frozenset(p) for p in itertools.combinations(LoadClass, 2)]


def default_three_load_combos() -> list:
    return [
        frozenset({LoadClass.FAN, LoadClass.LEDBULB, LoadClass.INCANDESCENTS}),
        frozenset({LoadClass.FAN, LoadClass.LEDSPOTLIGHT, LoadClass.SOLDERINGIRON}),
    ]


@dataclass
class DatasetSpec:
    """Composition of a generated dataset.

    The defaults mirror the measured corpus this synthesizes: 250 single
    load measurements per class and 100 per multi-load combination, except
    that all 55 two-load pairs are included by default (restrict via
    two_load_combos when a sparser composition is wanted).
    """

    singles_per_class: int = 250
    two_load_combos: list = field(default_factory=all_two_load_combos)
    samples_per_two_load: int = 100
    three_load_combos: list = field(default_factory=default_three_load_combos)
    samples_per_three_load: int = 100
    master_seed: int = 20260801
    force_resistive: bool = False
    resistor_powers: dict = field(default_factory=lambda: dict(RESISTOR_ORACLE_POWERS_W))

    def __post_init__(self):
        if self.singles_per_class < 0 or self.samples_per_two_load < 0 \
                or self.samples_per_three_load < 0:
            raise ValueError("sample counts must be >= 0")
        self.two_load_combos = [validate_label_set(c) for c in self.two_load_combos]
        self.three_load_combos = [validate_label_set(c) for c in self.three_load_combos]
        for c in self.two_load_combos:
            if len(c) != 2:
                raise ValueError("two_load_combos entries must have 2 classes")
        for c in self.three_load_combos:
            if len(c) != 3:
                raise ValueError("three_load_combos entries must have 3 classes")

    def plan(self) -> list:
        """Ordered (combo_id, labels, count) blocks defining sample order."""
        blocks = []
        if self.singles_per_class > 0:
            for c in LoadClass:
                blocks.append((combo_id_for({c}), frozenset({c}), self.singles_per_class))
        if self.samples_per_two_load > 0:
            for combo in self.two_load_combos:
                blocks.append((combo_id_for(combo), combo, self.samples_per_two_load))
        if self.samples_per_three_load > 0:
            for combo in self.three_load_combos:
                blocks.append((combo_id_for(combo), combo, self.samples_per_three_load))
        return blocks

    def total_samples(self) -> int:
        return sum(count for _, _, count in self.plan())


def sample_seed(master_seed: int, combo_id: str, index: int, slot: str) -> int:
    """Stable cross-platform per-sample seed (no builtin hash involved)."""
    digest = hashlib.sha256(
        f"{master_seed}/{combo_id}/{index}/{slot}".encode()
    ).digest()
    return int.from_bytes(digest[:16], "big")


def _simulate_chunk(args):
    """Worker: simulate a contiguous chunk of samples, return matrix arrays."""
    (chunk, spec_fields, supply_fields, sched_fields, jitter_fields, gap_s) = args
    supply = SupplyConfig(**supply_fields)
    sched = DimmingSchedule(**sched_fields)
    jitter = JitterSpec(**jitter_fields)
    force_resistive = spec_fields["force_resistive"]
    resistor_powers = {LoadClass.from_label(k): v
                       for k, v in spec_fields["resistor_powers"].items()}
    master_seed = spec_fields["master_seed"]
    power_overrides = {LoadClass.from_label(k): v
                       for k, v in spec_fields["power_overrides"].items()}

    b = len(chunk)
    # Group columns by class for batched instantiation.
    cols_by_class: dict[LoadClass, list] = {}
    for col, (combo_id, label_names, j) in enumerate(chunk):
        for name in label_names:
            cols_by_class.setdefault(LoadClass.from_label(name), []).append((col, combo_id, j))

    members = []
    for cls in LoadClass:
        entries = cols_by_class.get(cls)
        if not entries:
            continue
        if force_resistive:
            instances = [
                instantiate_resistor(cls, resistor_powers[cls],
                                     sample_seed(master_seed, combo_id, j, cls.label),
                                     supply)
                for _, combo_id, j in entries
            ]
        else:
            seeds = [sample_seed(master_seed, combo_id, j, cls.label)
                     for _, combo_id, j in entries]
            instances = instantiate_batch(cls, jitter, seeds, supply,
                                          power_overrides.get(cls))
            for inst, (_, _, j) in zip(instances, entries):
                if inst.appliance_type is ApplianceType.TYPE_III and j > 0:
                    drift(inst, j * gap_s)
        # Pad to the full chunk width; inactive columns reuse the first
        # instance's parameters and are masked to contribute zero current.
        mask = np.zeros(b)
        col_models = [instances[0].model] * b
        for inst, (col, _, _) in zip(instances, entries):
            col_models[col] = inst.model
            mask[col] = 1.0
        members.append(_MaskedMember(stack_models(col_models), mask))

    try:
        v, i, p = run_probe_members(members, b, supply, sched)
    except NonConvergence as exc:
        raise SimulationError(chunk[0][0], exc) from exc
    return v, i, p


class _InlineExecutor:
    def map(self, fn, iterable):
        return map(fn, iterable)


def generate(spec: DatasetSpec,
             supply: SupplyConfig | None = None,
             schedule: DimmingSchedule | None = None,
             jitter: JitterSpec | None = None,
             sample_gap_s: float = DEFAULT_SAMPLE_GAP_S,
             power_overrides: dict | None = None,
             jobs: int = 1,
             progress=None) -> Dataset:
    """Generate the full labeled dataset described by a DatasetSpec.

    Every sample gets fresh jittered instances seeded from
    (master_seed, combo_id, index); Type III members additionally drift as
    if the j-th sample were taken j*sample_gap_s seconds after plug-in.
    Output is byte-for-byte independent of the jobs count.

    Args:
        spec: Dataset composition and master seed.
        supply, schedule, jitter: Simulation parameters (defaults if None).
        sample_gap_s: Wall time between consecutive samples of one combo.
        jobs: Worker processes; 1 runs inline.
        progress: Optional callable(combo_id, done, total) for reporting.

    Returns:
        Dataset with spec.total_samples() entries in deterministic order.
    """
    supply = supply or SupplyConfig()
    schedule = schedule or DimmingSchedule()
    jitter = jitter or JitterSpec()

    flat = []  # (combo_id, [label names], j) per sample, in dataset order
    for combo_id, labels, count in spec.plan():
        names = sorted(c.label for c in labels)
        for j in range(count):
            flat.append((combo_id, names, j))

    spec_fields = {
        "force_resistive": spec.force_resistive,
        "resistor_powers": {c.label: w for c, w in spec.resistor_powers.items()},
        "master_seed": spec.master_seed,
        "power_overrides": {c.label: w for c, w in (power_overrides or {}).items()},
    }
    supply_fields = {
        "mains_frequency": supply.mains_frequency,
        "nominal_rms_voltage": supply.nominal_rms_voltage,
        "samples_per_period": supply.samples_per_period,
        "source_resistance": supply.source_resistance,
        "edge_mode": supply.edge_mode,
    }
    sched_fields = {
        "ratios": schedule.ratios,
        "periods_per_ratio": schedule.periods_per_ratio,
        "settle_periods": schedule.settle_periods,
    }
    jitter_fields = {
        "power_spread": jitter.power_spread,
        "secondary_spread": jitter.secondary_spread,
        "drift_magnitude": jitter.drift_magnitude,
    }

    jobs = max(1, int(jobs))
    n_chunks = jobs if jobs > 1 else 1
    chunk_size = max(1, -(-len(flat) // n_chunks)) if flat else 1
    chunks = [flat[i:i + chunk_size] for i in range(0, len(flat), chunk_size)]
    tasks = [(chunk, spec_fields, supply_fields, sched_fields, jitter_fields,
              sample_gap_s) for chunk in chunks]

    results = []
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_simulate_chunk, tasks):
                results.append(out)
    else:
        for idx, task in enumerate(tasks):
            results.append(_simulate_chunk(task))
            if progress is not None:
                done = min((idx + 1) * chunk_size, len(flat))
                progress("chunk", done, len(flat))

    samples = []
    pos = 0
    for (chunk, *_), (v, i, p) in zip(tasks, results):
        for col, (combo_id, names, _) in enumerate(chunk):
            labels = frozenset(LoadClass.from_label(n) for n in names)
            try:
                mats = MeasurementMatrices(v_rms=v[col], i_rms=i[col],
                                           real_power=p[col])
            except ValueError as exc:
                raise SimulationError(combo_id, exc) from exc
            samples.append(Sample(matrices=mats, labels=labels))
            pos += 1
    return Dataset(samples)


# ---------------------------------------------------------------------------
# Target encoding
# ---------------------------------------------------------------------------


@dataclass
class TargetVector:
    """Training target: class distribution plus load-count one-hot."""

    class_part: np.ndarray
    count_part: np.ndarray


def encode_target(labels, k: int = N_CLASSES) -> TargetVector:
    """Encode a label set as (uniform mass on present classes | count one-hot).

    A two-load sample puts 0.5 on each present class and [0, 1, 0] on the
    count neurons; a three-load sample uses exact thirds.
    """
    lset = validate_label_set(labels)
    indices = sorted(c.index for c in lset)
    if indices[-1] >= k:
        raise ValueError(f"class index {indices[-1]} out of range for K={k}")
    n = len(indices)
    class_part = np.zeros(k)
    class_part[indices] = 1.0 / n
    count_part = np.zeros(3)
    count_part[n - 1] = 1.0
    return TargetVector(class_part=class_part, count_part=count_part)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def split_indices(ds: Dataset, train_per_combo: int, test_per_combo: int,
                  seed: int, overrides: dict | None = None):
    """Index form of split(): returns (train_indices, test_indices)."""
    overrides = overrides or {}
    train_idx: list[int] = []
    test_idx: list[int] = []
    for combo_id, indices in ds.by_combo().items():
        n_labels = len(ds[indices[0]].labels)
        n_train, n_test = overrides.get(n_labels, (train_per_combo, test_per_combo))
        needed = n_train + n_test
        if len(indices) < needed:
            raise InsufficientSamples(combo_id, needed, len(indices))
        rng = np.random.default_rng(sample_seed(seed, combo_id, 0, "split"))
        perm = rng.permutation(len(indices))
        chosen = [indices[p] for p in perm]
        train_idx.extend(chosen[:n_train])
        test_idx.extend(chosen[n_train:n_train + n_test])
    return train_idx, test_idx


def split(ds: Dataset, train_per_combo: int, test_per_combo: int, seed: int,
          overrides: dict | None = None):
    """Random disjoint train/test selection per combination.

    Args:
        ds: Source dataset.
        train_per_combo, test_per_combo: Default per-combination counts.
        seed: Split seed; selection is deterministic per (seed, combo_id).
        overrides: Optional {label_count: (train, test)} to give 1-, 2- or
            3-load categories different counts (the sparse-multis protocol
            uses {1: (160, 90), 2: (10, 90), 3: (10, 90)}).

    Returns:
        (train, test) Dataset pair; disjoint subsets of ds.

    Raises:
        InsufficientSamples: If a combination has fewer than train + test.
    """
    train_idx, test_idx = split_indices(ds, train_per_combo, test_per_combo,
                                        seed, overrides)
    return ds.subset(train_idx), ds.subset(test_idx)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save(ds: Dataset, path) -> None:
    """Write a dataset as line-delimited JSON records under a header line."""
    rows, cols = (ds[0].matrices.shape if len(ds) else (14, 20))
    with open(path, "w", encoding="utf-8") as fh:
        header = {"schema": SCHEMA, "count": len(ds), "rows": rows, "cols": cols}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for s in ds:
            rec = {
                "combo_id": s.combo_id,
                "labels": sorted(c.label for c in s.labels),
                "v_rms": s.matrices.v_rms.ravel().tolist(),
                "i_rms": s.matrices.i_rms.ravel().tolist(),
                "real_power": s.matrices.real_power.ravel().tolist(),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load(path) -> Dataset:
    """Read a dataset written by save(); validates every record.

    Raises:
        SchemaVersionMismatch: Unknown schema tag in the header.
        CorruptRecord: Unparseable or invariant-violating line (1-based
            line number attached).
    """
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise CorruptRecord(1, "missing header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorruptRecord(1, f"unreadable header: {exc}") from exc
        if not isinstance(header, dict) or "schema" not in header:
            raise CorruptRecord(1, "header lacks a schema field")
        if header["schema"] != SCHEMA:
            raise SchemaVersionMismatch(
                f"expected schema '{SCHEMA}', found '{header['schema']}'")
        count = int(header.get("count", -1))
        rows = int(header.get("rows", 14))
        cols = int(header.get("cols", 20))

        samples = []
        line_no = 1
        for line in fh:
            line_no += 1
            try:
                rec = json.loads(line)
                labels = frozenset(LoadClass.from_label(n) for n in rec["labels"])
                mats = MeasurementMatrices(
                    v_rms=np.asarray(rec["v_rms"], dtype=float).reshape(rows, cols),
                    i_rms=np.asarray(rec["i_rms"], dtype=float).reshape(rows, cols),
                    real_power=np.asarray(rec["real_power"],
                                          dtype=float).reshape(rows, cols),
                )
                samples.append(Sample(matrices=mats, labels=labels,
                                      combo_id=rec["combo_id"]))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise CorruptRecord(line_no, str(exc)) from exc
        if count >= 0 and len(samples) != count:
            raise CorruptRecord(line_no + 1,
                                f"header promised {count} records, found {len(samples)}")
    return Dataset(samples)
