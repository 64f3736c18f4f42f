"""Classification metrics and the view-orientation sequence search.

The evaluation side is deliberately small: run the tuner over a frozen
model's validation split, tally a confusion matrix, and report accuracy.
The search side implements the four-step pyramid that picks a dataset's
best ordered VO triple: score all six candidates alone, score ordered
pairs built from the best singles, extend the best pairs into triples
with the remaining top singles, and keep the argmax triple. Every tuple
is trained at most once; equal accuracies resolve lexicographically so
repeated runs audit identically.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .condense import find_orientation, vo_table
from .errors import ArgumentError, ConfigError
from .model import GestureNet, image_batch
from .nn import expand_cells
from .training import EncodedDataset, _batched


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    """Validation-split metrics for one model + VO sequence.

    ``confusion`` is an (N, N) count matrix with rows = true class and
    columns = predicted class, both 0-based. ``per_class_accuracy`` holds
    NaN for classes absent from the split.
    """

    dataset_id: str
    vo_sequence: tuple
    accuracy: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray
    class_names: tuple = ()

    @property
    def sample_count(self) -> int:
        return int(self.confusion.sum())


def tally_confusion(truth, predicted, class_count: int) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise ArgumentError(f"label vectors disagree: {truth.shape} vs {predicted.shape}")
    if truth.size == 0:
        raise ArgumentError("cannot tally an empty validation set")
    for v in (truth, predicted):
        if v.min() < 0 or v.max() >= class_count:
            raise ArgumentError(f"labels outside 0..{class_count - 1}")
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    return confusion


def report_from_decisions(truth, predicted, class_count: int, dataset_id: str = "",
                          vo_sequence=(), class_names=()) -> EvalReport:
    """Build an EvalReport from 0-based truth/prediction vectors."""
    confusion = tally_confusion(truth, predicted, class_count)
    totals = confusion.sum(axis=1)
    diag = np.diag(confusion).astype(np.float64)
    with np.errstate(invalid="ignore"):
        per_class = np.where(totals > 0, diag / np.maximum(totals, 1), np.nan)
    return EvalReport(
        dataset_id=dataset_id,
        vo_sequence=tuple(vo_sequence),
        accuracy=float(diag.sum() / confusion.sum()),
        confusion=confusion,
        per_class_accuracy=per_class,
        class_names=tuple(class_names),
    )


def tuner_decisions(net: GestureNet, data: EncodedDataset, size: int,
                    batch_size: int = 16, indices=None) -> np.ndarray:
    """Tuner argmax per gesture of a split, (n,) 0-based class indices."""
    arrays = data.stage(size)
    idx = data.val_idx if indices is None else np.asarray(indices)
    out = np.empty(len(idx), dtype=np.int64)
    pos = 0
    for chunk in _batched(idx, batch_size):
        xs = [image_batch(arrays[k][chunk], net.dtype) for k in range(len(arrays))]
        probs, _ = net.forward_multistream(xs, mode="eval")
        pseudo = expand_cells(probs, net.config.pseudo_px)
        tuner = net.forward_tuner(pseudo, mode="eval")
        out[pos:pos + len(chunk)] = np.argmax(tuner.data, axis=1)
        pos += len(chunk)
    return out


def evaluate(net: GestureNet, data: EncodedDataset, size: int = None,
             batch_size: int = 16, indices=None) -> EvalReport:
    """Score the tuner over a validation split and tally its confusion.

    Decisions come from the tuner vector alone (argmax, ties to the lowest
    class index). ``size`` defaults to the model's final stage size and
    must be present in the encoded data.
    """
    if tuple(data.vo_names) != net.config.vo_names:
        raise ConfigError(f"encoded streams {data.vo_names} do not match "
                          f"model views {net.config.vo_names}")
    size = net.config.stage_sizes[-1] if size is None else int(size)
    idx = data.val_idx if indices is None else np.asarray(indices)
    if len(idx) == 0:
        raise ArgumentError("validation split is empty")
    predicted = tuner_decisions(net, data, size, batch_size, idx)
    return report_from_decisions(
        data.labels[idx], predicted, net.config.class_count,
        dataset_id=data.dataset_id, vo_sequence=net.config.vo_names,
        class_names=net.config.class_names)


def confusion_pairs(report: EvalReport, k: int = 5):
    """Most-confused class pairs: [(i, j, count)] with i < j, descending.

    The count for (i, j) sums both off-diagonal cells, confusion[i, j] +
    confusion[j, i]; zero-count pairs are dropped. Ties order by index.
    """
    c = report.confusion
    pairs = []
    for i in range(c.shape[0]):
        for j in range(i + 1, c.shape[0]):
            total = int(c[i, j] + c[j, i])
            if total > 0:
                pairs.append((i, j, total))
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    return pairs[:k]


# -- report files -------------------------------------------------------------

def write_report(report: EvalReport, path) -> None:
    """Evaluation report file: TSV confusion block plus a readable summary."""
    names = report.class_names or tuple(
        f"class {i + 1}" for i in range(report.confusion.shape[0]))
    lines = ["# gestigo evaluation report",
             f"dataset\t{report.dataset_id}",
             f"vo_sequence\t{','.join(report.vo_sequence)}",
             f"samples\t{report.sample_count}",
             f"accuracy\t{report.accuracy:.6f}",
             "",
             "# confusion matrix (rows = truth, columns = prediction)",
             "\t".join(["truth\\pred"] + [str(i + 1) for i in range(len(names))])]
    for i, row in enumerate(report.confusion):
        lines.append("\t".join([str(i + 1)] + [str(int(v)) for v in row]))
    lines += ["", "# per-class accuracy"]
    for i, acc in enumerate(report.per_class_accuracy):
        shown = "-" if np.isnan(acc) else f"{acc:.4f}"
        lines.append(f"{i + 1}\t{names[i]}\t{shown}")
    worst = confusion_pairs(report, 3)
    if worst:
        lines += ["", "# most confused pairs"]
        for i, j, count in worst:
            lines.append(f"{names[i]} <-> {names[j]}\t{count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def confusion_heatmap(report: EvalReport, path) -> None:
    """Render the confusion matrix as a PNG heat map (counts annotated)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    c = report.confusion
    n = c.shape[0]
    names = report.class_names or tuple(str(i + 1) for i in range(n))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * n + 2), max(3.5, 0.5 * n + 1.5)))
    im = ax.imshow(c, cmap="Blues")
    ax.set_xticks(range(n), labels=names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(n), labels=names, fontsize=8)
    ax.set_xlabel("prediction")
    ax.set_ylabel("truth")
    ax.set_title(f"{report.dataset_id}  acc {report.accuracy:.3f}")
    if n <= 30:
        cutoff = c.max() / 2 if c.max() else 1
        for i in range(n):
            for j in range(n):
                if c[i, j]:
                    ax.text(j, i, str(int(c[i, j])), ha="center", va="center",
                            fontsize=7, color="white" if c[i, j] > cutoff else "black")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- view-orientation sequence search -----------------------------------------

@dataclass
class VoSearchState:
    """Audit trail of the VO search: every tuple trained and its accuracy."""

    singles: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)
    triples: dict = field(default_factory=dict)
    budget: int = 0

    def _table(self, length: int) -> dict:
        return {1: self.singles, 2: self.pairs, 3: self.triples}[length]

    def lookup(self, names):
        names = tuple(names)
        key = names[0] if len(names) == 1 else names
        return self._table(len(names)).get(key)

    def record(self, names, accuracy: float) -> None:
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ArgumentError(f"duplicate view orientation in {names}")
        if not 0.0 <= accuracy <= 1.0:
            raise ArgumentError(f"accuracy {accuracy} outside [0, 1]")
        key = names[0] if len(names) == 1 else names
        self._table(len(names))[key] = float(accuracy)
        self.budget += 1


def _ranked(table: dict, width) -> list:
    order = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
    keys = [k for k, _ in order]
    return keys if width is None else keys[:width]


def _run_step(state: VoSearchState, tuples, trainer, workers: int):
    """Train the step's not-yet-seen tuples; state updates at the boundary."""
    todo = [t for t in tuples if state.lookup(t) is None]
    if workers <= 1 or len(todo) <= 1:
        for t in todo:
            state.record(t, trainer(t))
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(t, pool.submit(trainer, t)) for t in todo]
        failure = None
        for t, fut in futures:
            try:
                acc = fut.result()
            except Exception as exc:        # keep completed results on failure
                failure = failure if failure is not None else exc
                continue
            if failure is None:
                state.record(t, acc)
        if failure is not None:
            raise failure


def vo_search(dataset_id: str, trainer, candidates=None, top_k_singles: int = 3,
              top_k_pairs: int = 3, state: VoSearchState = None, workers: int = 1):
    """Four-step pyramid search for the best ordered VO triple.

    ``trainer`` maps a tuple of VO names to a validation accuracy in
    [0, 1] and must be deterministic for reproducible audits. Steps:

    1. train every candidate alone;
    2. train all ordered pairs drawn from the ``top_k_singles`` best
       singles;
    3. train triples made by appending each remaining top single to the
       ``top_k_pairs`` best pairs;
    4. return the best triple (ties: lexicographic) plus the full state.

    Pass ``top_k_singles=len(candidates)`` and ``top_k_pairs=None`` to
    cover every ordered triple. A partially filled ``state`` is honoured
    (those tuples are not retrained), and on trainer failure the state
    keeps everything finished so far; the exception also carries it as
    ``partial_state``.
    """
    if candidates is None:
        candidates = tuple(sorted(vo.name for vo in vo_table(dataset_id)))
    candidates = tuple(candidates)
    if len(set(candidates)) != len(candidates):
        raise ArgumentError(f"duplicate candidate orientations: {candidates}")
    if len(candidates) < 3:
        raise ArgumentError("the search needs at least three candidate orientations")
    for name in candidates:
        find_orientation(dataset_id, name)
    if not 3 <= top_k_singles <= len(candidates):
        raise ArgumentError(f"top_k_singles must be 3..{len(candidates)}")
    state = state if state is not None else VoSearchState()
    try:
        _run_step(state, [(name,) for name in sorted(candidates)], trainer, workers)
        top_singles = _ranked({n: state.singles[n] for n in candidates}, top_k_singles)
        pair_tuples = sorted(itertools.permutations(sorted(top_singles), 2))
        _run_step(state, pair_tuples, trainer, workers)
        top_pairs = _ranked({p: state.pairs[p] for p in pair_tuples}, top_k_pairs)
        triple_tuples = sorted(dict.fromkeys(
            (a, b, v) for a, b in top_pairs for v in top_singles if v not in (a, b)))
        _run_step(state, triple_tuples, trainer, workers)
    except Exception as exc:
        exc.partial_state = state
        raise
    best = _ranked({t: state.triples[t] for t in triple_tuples}, 1)
    if not best:
        raise ArgumentError("search produced no triples; widen top_k_singles")
    return best[0], state


def write_search_report(triple, state: VoSearchState, path) -> None:
    """TSV dump of the search: chosen triple plus every tuple's accuracy."""
    lines = ["# gestigo view-orientation search",
             f"chosen\t{','.join(triple)}",
             f"trainings\t{state.budget}",
             "",
             "tuple\taccuracy"]
    for table in (state.singles, state.pairs, state.triples):
        for key in sorted(table, key=lambda k: (k,) if isinstance(k, str) else k):
            name = key if isinstance(key, str) else ",".join(key)
            lines.append(f"{name}\t{table[key]:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
