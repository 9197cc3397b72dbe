"""Dataset loading, normalization, synthesis, and UCI source conversion.

JSONL dataset format: one UTF-8 JSON record per line with fields
{id, split in {train,val,test}, label, channels: [[...] x C]}. Lines starting
with '#' are comments (the converter writes a provenance header).
"""

import hashlib
import json
import zipfile
from dataclasses import dataclass

import numpy as np

from .errors import DataError

CHARTRAJ_LENGTH = 206
CHARTRAJ_SPLIT = (1383, 606, 869)
CHARTRAJ_DEFAULT_SEED = 42


@dataclass
class LabeledSequence:
    channels: np.ndarray  # (C, T)
    label: int
    id: str


@dataclass
class NormalizationStats:
    mean: np.ndarray  # per channel
    std: np.ndarray


@dataclass
class DatasetBundle:
    train: list
    val: list
    test: list
    num_classes: int
    stats: NormalizationStats = None
    normalized: bool = False

    def all_sequences(self):
        return self.train + self.val + self.test


def load_jsonl(path):
    splits = {"train": [], "val": [], "test": []}
    max_label = -1
    seen_ids = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
                seq_id = str(rec["id"])
                split = rec["split"]
                label = int(rec["label"])
                channels = rec["channels"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}: malformed record at line {lineno}: {e}") from e
            if split not in splits:
                raise DataError(f"{path}: unknown split {split!r} at line {lineno}")
            if label < 0:
                raise DataError(f"{path}: negative label at line {lineno}")
            lengths = {len(ch) for ch in channels}
            if len(lengths) != 1:
                raise DataError(f"{path}: ragged channel lengths at line {lineno}")
            if seq_id in seen_ids:
                raise DataError(f"{path}: duplicate id {seq_id!r} at line {lineno}")
            seen_ids.add(seq_id)
            arr = np.asarray(channels, dtype=np.float64)
            if not np.isfinite(arr).all():
                raise DataError(f"{path}: non-finite value at line {lineno}")
            splits[split].append(LabeledSequence(arr, label, seq_id))
            max_label = max(max_label, label)
    if not splits["train"]:
        raise DataError(f"{path}: empty train split")
    if not splits["test"]:
        raise DataError(f"{path}: empty test split")
    return DatasetBundle(
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        num_classes=max_label + 1,
    )


def save_jsonl(bundle, path, header_lines=()):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        for split_name, seqs in (("train", bundle.train), ("val", bundle.val), ("test", bundle.test)):
            for seq in seqs:
                rec = {
                    "id": seq.id,
                    "split": split_name,
                    "label": int(seq.label),
                    "channels": seq.channels.tolist(),
                }
                f.write(json.dumps(rec) + "\n")


def normalize(bundle):
    """Fit per-channel mean/std on the train split and transform all splits."""
    if bundle.normalized:
        raise DataError("bundle already normalized")
    stacked = np.concatenate([seq.channels for seq in bundle.train], axis=1)
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    if np.any(std <= 0):
        raise DataError("degenerate channel: zero variance on the train split")
    stats = NormalizationStats(mean=mean, std=std)
    return apply_normalization(bundle, stats)


def apply_normalization(bundle, stats):
    """Transform all splits with the given stats (e.g. from a checkpoint)."""
    if bundle.normalized:
        raise DataError("bundle already normalized")

    def xform(seqs):
        return [
            LabeledSequence(
                (s.channels - stats.mean[:, None]) / stats.std[:, None], s.label, s.id
            )
            for s in seqs
        ]

    return DatasetBundle(
        train=xform(bundle.train),
        val=xform(bundle.val),
        test=xform(bundle.test),
        num_classes=bundle.num_classes,
        stats=stats,
        normalized=True,
    )


def _split_counts(n):
    # 60/20/20, train rounded up so a lone sample lands in train
    n_train = int(np.ceil(0.6 * n))
    rest = n - n_train
    n_val = rest // 2
    return n_train, n_val, rest - n_val


def synth_generate(num_classes, per_class, channels, length, seed=0):
    """Noisy class-dependent sinusoids; deterministic desk-scale fixture."""
    if min(num_classes, per_class, channels, length) < 1:
        raise DataError("synth_generate counts must all be >= 1")
    rng = np.random.default_rng(seed)
    splits = {"train": [], "val": [], "test": []}
    t = np.arange(length) / length
    for k in range(num_classes):
        freq = 2.0 + 3.0 * k
        phase = 0.9 * k
        n_train, n_val, n_test = _split_counts(per_class)
        assignment = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
        for j, split in enumerate(assignment):
            sig = np.stack(
                [
                    np.sin(2 * np.pi * freq * t + phase + 0.7 * c)
                    + 0.3 * rng.standard_normal(length)
                    for c in range(channels)
                ]
            )
            splits[split].append(LabeledSequence(sig, k, f"synth-{k}-{j}"))
    return DatasetBundle(
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        num_classes=num_classes,
    )


def _load_uci_arrays(source_path):
    """Read the UCI character-trajectories source (.mat, possibly zipped)."""
    from scipy.io import loadmat

    try:
        if zipfile.is_zipfile(source_path):
            with zipfile.ZipFile(source_path) as z:
                mat_names = [n for n in z.namelist() if n.endswith(".mat")]
                if not mat_names:
                    raise DataError(f"{source_path}: no .mat file inside archive")
                with z.open(mat_names[0]) as fh:
                    mat = loadmat(fh, squeeze_me=True)
        else:
            mat = loadmat(source_path, squeeze_me=True)
    except DataError:
        raise
    except Exception as e:
        raise DataError(f"cannot read UCI source {source_path}: {e}") from e
    if "mixout" not in mat or "consts" not in mat:
        raise DataError(f"{source_path}: missing 'mixout'/'consts' variables")
    sequences = [np.asarray(s, dtype=np.float64) for s in mat["mixout"]]
    consts = mat["consts"]
    labels = np.asarray(consts["charlabels"].item(), dtype=np.int64).ravel() - 1
    if len(labels) != len(sequences):
        raise DataError(f"{source_path}: label/sequence count mismatch")
    return sequences, labels


def _fit_length(arr, length):
    c, t = arr.shape
    if t >= length:
        return arr[:, :length]
    out = np.zeros((c, length))
    out[:, :t] = arr
    return out


def convert_uci_charset(source_path, out_path, seed=CHARTRAJ_DEFAULT_SEED):
    """Convert the UCI character-trajectories archive to the JSONL format.

    Sequences are end-padded with zeros or truncated to 206 steps; split
    assignment is a seeded shuffle into 1383/606/869. Re-running with the
    same seed is byte-identical.
    """
    sequences, labels = _load_uci_arrays(source_path)
    n = len(sequences)
    n_train, n_val, n_test = CHARTRAJ_SPLIT
    if n != n_train + n_val + n_test:
        raise DataError(f"expected {sum(CHARTRAJ_SPLIT)} samples, found {n}")
    perm = np.random.default_rng(seed).permutation(n)
    split_of = {}
    for rank, idx in enumerate(perm):
        if rank < n_train:
            split_of[idx] = "train"
        elif rank < n_train + n_val:
            split_of[idx] = "val"
        else:
            split_of[idx] = "test"
    splits = {"train": [], "val": [], "test": []}
    for i, (seq, label) in enumerate(zip(sequences, labels)):
        if seq.ndim != 2 or seq.shape[0] != 3:
            raise DataError(f"sample {i}: expected 3 channels, got shape {seq.shape}")
        fitted = _fit_length(seq, CHARTRAJ_LENGTH)
        splits[split_of[i]].append(LabeledSequence(fitted, int(label), f"uci-{i:04d}"))
    bundle = DatasetBundle(
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        num_classes=int(labels.max()) + 1,
    )
    header = [
        "dataset: character-trajectories (UCI), converted to tsrobust JSONL",
        f"format_version: 1; sequences end-padded with zeros or truncated to {CHARTRAJ_LENGTH} steps",
        f"split: seeded shuffle (seed {seed}) into {n_train}/{n_val}/{n_test} train/val/test",
    ]
    save_jsonl(bundle, out_path, header_lines=header)
    return bundle


def file_checksum(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
