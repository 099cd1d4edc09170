"""Secondary-structure transition analytics.

Per-residue class sequences over the 8-letter alphabet G,H,I,E,B,T,S,C
(numeric codes 0..7) are scanned for the first class change; the following
window of frames yields a row-stochastic transition matrix. Occupancy over a
horizon is predicted as the running average of the chain's step distributions
(well-defined even for periodic chains) and compared against observed class
frequencies with the Jensen-Shannon divergence, log base 2, so values live in
[0, 1]. All functions are pure; per-residue analyses are embarrassingly
parallel.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .seeding import tagged_rng

ALPHABET = "GHIEBTSC"
N_CLASSES = len(ALPHABET)
CODE_OF = {c: i for i, c in enumerate(ALPHABET)}

WINDOW_DEFAULT = 100
HORIZON_DEFAULT = 1500


@dataclass(frozen=True)
class ClassSequence:
    residue_id: int
    frames: np.ndarray

    def __init__(self, residue_id: int, frames) -> None:
        arr = np.array(frames, dtype=np.int8)
        if arr.size == 0:
            raise ValueError(f"residue {residue_id}: empty sequence")
        if arr.min() < 0 or arr.max() >= N_CLASSES:
            raise ValueError(f"residue {residue_id}: class code out of range")
        arr.setflags(write=False)
        object.__setattr__(self, "residue_id", residue_id)
        object.__setattr__(self, "frames", arr)

    def letters(self) -> str:
        return "".join(ALPHABET[c] for c in self.frames)


@dataclass(frozen=True)
class TransitionEvent:
    residue_id: int
    t_a: int
    initial_class: int
    window: int = WINDOW_DEFAULT


class ClassFileError(ValueError):
    def __init__(self, lineno: int, message: str) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_class_file(text: str) -> list[ClassSequence]:
    """One line per frame, one alphabet character per residue; returns per-residue columns."""
    lines = text.splitlines()
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ClassFileError(1, "empty class file")
    width = len(lines[0])
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if len(line) != width:
            raise ClassFileError(lineno, f"ragged line: {len(line)} chars, expected {width}")
        codes = []
        for ch in line:
            if ch not in CODE_OF:
                raise ClassFileError(lineno, f"character {ch!r} not in alphabet {ALPHABET}")
            codes.append(CODE_OF[ch])
        rows.append(codes)
    if width == 0:
        raise ClassFileError(1, "no residues")
    matrix = np.array(rows, dtype=np.int8)
    return [ClassSequence(j, matrix[:, j]) for j in range(width)]


def detect_event(seq: ClassSequence, window: int = WINDOW_DEFAULT) -> TransitionEvent | None:
    """First frame whose class differs from the previous; None for constant sequences."""
    frames = seq.frames
    changed = np.nonzero(frames[1:] != frames[:-1])[0]
    if changed.size == 0:
        return None
    t_a = int(changed[0]) + 1
    return TransitionEvent(seq.residue_id, t_a, int(frames[t_a - 1]), window)


def build_matrix(seq: ClassSequence, event: TransitionEvent, window: int | None = None) -> np.ndarray:
    """Row-normalized consecutive-transition counts over frames [t_a, t_a + window).

    The window truncates at sequence end; rows never visited become identity
    rows (absorbing), keeping the matrix row-stochastic.
    """
    if window is None:
        window = event.window
    frames = seq.frames[event.t_a : min(event.t_a + window, seq.frames.size)]
    if frames.size < 2:
        raise ValueError("insufficient data: fewer than 2 frames in window")
    counts = np.zeros((N_CLASSES, N_CLASSES))
    np.add.at(counts, (frames[:-1], frames[1:]), 1.0)
    matrix = np.eye(N_CLASSES)
    row_sums = counts.sum(axis=1)
    visited = row_sums > 0
    matrix[visited] = counts[visited] / row_sums[visited, None]
    return matrix


def check_stochastic(matrix: np.ndarray, tol: float = 1e-9) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("transition matrix must be square")
    if (matrix < -tol).any():
        raise ValueError("transition matrix has negative entries")
    if not np.allclose(matrix.sum(axis=1), 1.0, atol=tol):
        raise ValueError("transition matrix rows must sum to 1")


def predict_occupancy(matrix: np.ndarray, start: int, horizon: int) -> np.ndarray:
    """Average of the start class's step distributions over t = 1..horizon.

    This is the model-expected empirical class frequency over the horizon,
    directly comparable to observed_occupancy.
    """
    check_stochastic(matrix)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 <= start < matrix.shape[0]:
        raise ValueError("start class out of range")
    v = np.zeros(matrix.shape[0])
    v[start] = 1.0
    acc = np.zeros_like(v)
    for _ in range(horizon):
        v = v @ matrix
        acc += v
    return acc / horizon


def observed_occupancy(seq: ClassSequence, event: TransitionEvent, horizon: int) -> np.ndarray:
    """Empirical class frequencies over frames (t_a, t_a + horizon], truncated at end."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    frames = seq.frames[event.t_a + 1 : event.t_a + 1 + horizon]
    if frames.size == 0:
        raise ValueError("insufficient data: no frames after the event")
    return np.bincount(frames, minlength=N_CLASSES) / frames.size


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in bits: 0.5 KL(P||M) + 0.5 KL(Q||M), M = (P+Q)/2."""
    p = _check_distribution(p)
    q = _check_distribution(q)
    if p.size != q.size:
        raise ValueError("distribution size mismatch")
    m = 0.5 * (p + q)
    return float(0.5 * _kl_bits(p, m) + 0.5 * _kl_bits(q, m))


def _check_distribution(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise ValueError("distribution must be a 1-d vector")
    if (arr < 0).any():
        raise ValueError("distribution has negative entries")
    if abs(arr.sum() - 1.0) > 1e-6:
        raise ValueError("distribution must sum to 1")
    return arr


def _kl_bits(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / m[mask])))


def evaluate_transitions(
    assessments: list[tuple[int, np.ndarray, np.ndarray]],
) -> list[tuple[str, float]]:
    """Per-label divergence rows, ascending by divergence.

    Each assessment is (initial class, predicted occupancy, observed occupancy).
    The label "kl" uses k = initial class and l = modal observed class; the
    distributions of every event sharing a label are averaged before one JSD
    is computed per label.
    """
    groups: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    for initial, predicted, observed in assessments:
        modal = int(np.argmax(observed))
        label = f"{initial}{modal}"
        groups.setdefault(label, []).append((np.asarray(predicted, float), np.asarray(observed, float)))
    rows = []
    for label, pairs in groups.items():
        pred = np.mean([p for p, _o in pairs], axis=0)
        obs = np.mean([o for _p, o in pairs], axis=0)
        rows.append((label, js_divergence(pred, obs)))
    rows.sort(key=lambda r: (r[1], r[0]))
    return rows


@dataclass
class SequenceAnalysis:
    event: TransitionEvent
    matrix: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray


def analyze_sequences(
    sequences: list[ClassSequence],
    window: int = WINDOW_DEFAULT,
    horizon: int = HORIZON_DEFAULT,
) -> tuple[list[SequenceAnalysis], list[tuple[str, float]]]:
    """Full per-residue pipeline: event detection, window matrix, occupancy comparison."""
    analyses = []
    assessments = []
    for seq in sequences:
        event = detect_event(seq, window)
        if event is None:
            continue
        try:
            matrix = build_matrix(seq, event, window)
            observed = observed_occupancy(seq, event, horizon)
        except ValueError:
            continue  # event too close to the end of the trajectory to evaluate
        start = int(seq.frames[event.t_a])
        predicted = predict_occupancy(matrix, start, horizon)
        analyses.append(SequenceAnalysis(event, matrix, predicted, observed))
        assessments.append((event.initial_class, predicted, observed))
    return analyses, evaluate_transitions(assessments)


def evaluation_to_csv(rows: list[tuple[str, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "js_divergence"])
    for label, jsd in rows:
        writer.writerow([label, repr(jsd)])
    return buf.getvalue()


def evaluation_from_csv(text: str) -> list[tuple[str, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["label", "js_divergence"]:
        raise ValueError(f"bad evaluation header: {header}")
    return [(row[0], float(row[1])) for row in reader]


def markov_sequence(
    matrix: np.ndarray,
    start: int,
    n_frames: int,
    seed: int,
    residue_id: int = 0,
) -> ClassSequence:
    """Seeded trajectory sampled from a known chain; test oracle support."""
    check_stochastic(matrix)
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    rng = tagged_rng(seed, "markov", residue_id)
    frames = np.empty(n_frames, dtype=np.int8)
    frames[0] = start
    cumulative = np.cumsum(matrix, axis=1)
    draws = rng.random(n_frames - 1)
    state = start
    for t in range(1, n_frames):
        state = int(np.searchsorted(cumulative[state], draws[t - 1], side="right"))
        state = min(state, matrix.shape[0] - 1)
        frames[t] = state
    return ClassSequence(residue_id, frames)
