"""Max-margin training: loss-augmented inference, the regularized objective,
per-instance SGD with learning-rate decay, dev-set model selection, model
serialization, and a finite-difference gradient checker.

The per-instance loss is

    q_i = max_lbar ( s(x_i, lbar) + Delta(l_i, lbar) ) - s(x_i, l_i)

which is non-negative because the gold sequence itself competes with
Delta = 0. For the Hamming trigger the inner max is exact: the per-position
cost folds into the emission log-probabilities and Viterbi decodes the
augmented problem. For the F-score triggers the max runs over a beam-search
candidate set (Viterbi-seeded, gold always injected) reranked by s + Delta.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import Sentence, TagScheme, Vocab, repair_bio
from .embeddings import EmbeddingTable
from .evaluation import evaluate
from .model import ModelMeta, ModelParams, feature_table_names, zero_grads
from .network import (
    EmissionMatrix,
    LstmParams,
    ProjectionParams,
    SentenceCache,
    backward,
    forward_sentence,
)
from .structured import ScoredSequence, beam_topk, sentence_score, viterbi
from .triggers import Trigger

DEFAULT_LR = 0.1
DEFAULT_DECAY = 0.95
DEFAULT_L2 = 1e-6
DEFAULT_EPOCHS = 20
DEFAULT_BEAM_K = 8
DEFAULT_SEED = 1


@dataclass
class TrainConfig:
    trigger: Trigger
    learning_rate: float = DEFAULT_LR
    decay: float = DEFAULT_DECAY
    l2_lambda: float = DEFAULT_L2
    epochs: int = DEFAULT_EPOCHS
    beam_k: int = DEFAULT_BEAM_K
    seed: int = DEFAULT_SEED
    window: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if self.epochs < 1 or self.beam_k < 1:
            raise ValueError("epochs and beam_k must be at least 1")


def trainable_tensors(params: ModelParams) -> dict[str, np.ndarray]:
    tensors = params.named_tensors()
    if not params.token_table.trainable:
        tensors.pop("emb_token")
    return tensors


def _forward(sentence: Sentence, params: ModelParams) -> SentenceCache:
    return forward_sentence(sentence, params.assembly(), params.fwd, params.bwd, params.proj)


def predict_labels(sentence: Sentence, params: ModelParams) -> list[int]:
    """Plain Viterbi decode of one encoded sentence."""
    cache = _forward(sentence, params)
    return viterbi(cache.em, params.transitions).labels


def _augmented_best(
    gold: list[int],
    em: EmissionMatrix,
    trans: np.ndarray,
    trigger: Trigger,
    scheme: TagScheme,
    beam_k: int,
) -> tuple[list[int], float]:
    """Maximize s + Delta; returns (labels, augmented score).

    Ties: the plain Viterbi sequence wins whenever it attains the max,
    otherwise the lexicographically smaller label sequence does.
    """
    if not trigger.needs_rerank:
        cost = np.full(em.log_probs.shape, trigger.kappa)
        cost[np.arange(len(gold)), gold] = 0.0
        aug_em = EmissionMatrix(em.probs, em.log_probs + cost)
        best = viterbi(aug_em, trans)
        return best.labels, best.score

    candidates = beam_topk(em, trans, beam_k)
    if not any(c.labels == gold for c in candidates):
        candidates.append(ScoredSequence(list(gold), sentence_score(em, trans, gold)))
    vit_labels = candidates[0].labels
    best_labels, best_aug = None, -np.inf
    for cand in candidates:
        aug = cand.score + trigger.delta(gold, cand.labels, scheme)
        if aug > best_aug:
            best_labels, best_aug = cand.labels, aug
        elif aug == best_aug and best_labels != vit_labels:
            if cand.labels == vit_labels or cand.labels < best_labels:
                best_labels = cand.labels
    return best_labels, best_aug


def loss_augmented_predict(
    sentence: Sentence, params: ModelParams, trigger: Trigger, beam_k: int
) -> ScoredSequence:
    """The sequence maximizing s + Delta against this sentence's gold labels.

    The returned score is the plain sentence score of those labels (the
    augmented objective decides only which labels come back).
    """
    if sentence.gold_labels is None:
        raise ValueError("sentence has no gold labels")
    cache = _forward(sentence, params)
    labels, _ = _augmented_best(
        sentence.gold_labels, cache.em, params.transitions, trigger,
        params.meta.scheme, beam_k,
    )
    return ScoredSequence(labels, sentence_score(cache.em, params.transitions, labels))


def _transition_grad(out: np.ndarray, labels: list[int], sign: float, n_labels: int):
    prev = n_labels
    for lab in labels:
        out[prev, lab] += sign
        prev = lab


def instance_loss(
    sentence: Sentence, params: ModelParams, trigger: Trigger, beam_k: int
) -> tuple[float, ScoredSequence]:
    """(q_i, the augmented argmax) for one sentence."""
    q, lbar, _ = instance_gradients(sentence, params, trigger, beam_k, want_grads=False)
    return q, lbar


def instance_gradients(
    sentence: Sentence,
    params: ModelParams,
    trigger: Trigger,
    beam_k: int,
    want_grads: bool = True,
) -> tuple[float, ScoredSequence, dict[str, np.ndarray] | None]:
    """One forward/backward pass: (q_i, lbar, gradient dict or None).

    The gradients are the exact subgradient of q_i at the attained max branch
    (no L2 term). When lbar equals gold the score terms cancel and the
    gradient is identically zero, returned as None.
    """
    gold = sentence.gold_labels
    if gold is None:
        raise ValueError("sentence has no gold labels")
    cache = _forward(sentence, params)
    trans = params.transitions
    labels, aug = _augmented_best(gold, cache.em, trans, trigger, params.meta.scheme, beam_k)
    q = aug - sentence_score(cache.em, trans, gold)
    lbar = ScoredSequence(labels, sentence_score(cache.em, trans, labels))
    if not want_grads or labels == gold:
        return q, lbar, None

    n = len(gold)
    d_log = np.zeros_like(cache.em.log_probs)
    rows = np.arange(n)
    np.add.at(d_log, (rows, labels), 1.0)
    np.add.at(d_log, (rows, gold), -1.0)
    net = backward(cache, d_log, params.assembly(), params.fwd, params.bwd, params.proj)

    grads: dict[str, np.ndarray] = {"emb_token": net.d_token}
    for name, d_feat in zip(feature_table_names(params.meta), net.d_feats):
        grads[name] = d_feat
    grads["lstm_fwd_w"] = net.d_fwd_w
    grads["lstm_fwd_b"] = net.d_fwd_b
    grads["lstm_bwd_w"] = net.d_bwd_w
    grads["lstm_bwd_b"] = net.d_bwd_b
    grads["proj_w"] = net.d_w_hy
    grads["proj_b"] = net.d_b_y
    d_trans = np.zeros_like(trans)
    _transition_grad(d_trans, labels, +1.0, cache.em.n_labels)
    _transition_grad(d_trans, gold, -1.0, cache.em.n_labels)
    grads["transitions"] = d_trans
    return q, lbar, grads


def l2_norm_sq(params: ModelParams) -> float:
    """Sum of squares over every trainable tensor."""
    return float(sum((arr * arr).sum() for arr in trainable_tensors(params).values()))


def objective(dataset: list[Sentence], params: ModelParams, config: TrainConfig) -> float:
    """Mean instance loss plus the L2 penalty (lambda/2 ||theta||^2)."""
    if not dataset:
        raise ValueError("empty dataset")
    total = 0.0
    for sent in dataset:
        q, _ = instance_loss(sent, params, config.trigger, config.beam_k)
        total += q
    return total / len(dataset) + 0.5 * config.l2_lambda * l2_norm_sq(params)


def sgd_step(
    params: ModelParams, grads: dict[str, np.ndarray] | None, lr: float, l2_lambda: float
) -> None:
    """In-place update theta <- theta - lr * (g + lambda * theta).

    Weight decay applies to every trainable tensor on every step, gradient
    or not; tensors absent from the gradient dict update with g = 0.
    """
    for name, arr in trainable_tensors(params).items():
        g = grads.get(name) if grads else None
        if g is None:
            if l2_lambda:
                arr -= lr * l2_lambda * arr
            continue
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {arr.shape}")
        arr -= lr * (g + l2_lambda * arr)


def _epoch_f1(params: ModelParams, dev_set: list[Sentence], scheme: TagScheme):
    preds = [predict_labels(sent, params) for sent in dev_set]
    report = evaluate(dev_set, preds, scheme)
    return report


def train(
    params: ModelParams,
    train_set: list[Sentence],
    dev_set: list[Sentence],
    config: TrainConfig,
    epoch_hook=None,
) -> tuple[ModelParams, list[str]]:
    """Shuffled per-instance SGD with dev-set model selection.

    Returns (best params snapshot, metrics log). The log has one line per
    epoch: epoch, lr, mean q, dev named-F1, dev nominal-F1, dev overall-F1,
    tab-separated; dev columns are "-" when the dev set is empty (the last
    epoch then wins). ``epoch_hook(epoch, params)`` may return True to stop
    after the current epoch; the best snapshot so far is still returned.
    """
    if not train_set:
        raise ValueError("empty training set")
    scheme = params.meta.scheme
    rng = np.random.default_rng(config.seed)
    best = params.copy()
    best_f1 = -1.0
    log: list[str] = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.decay ** epoch
        order = rng.permutation(len(train_set))
        total_q = 0.0
        for i in order:
            q, _, grads = instance_gradients(train_set[int(i)], params, config.trigger, config.beam_k)
            total_q += q
            sgd_step(params, grads, lr, config.l2_lambda)
        mean_q = total_q / len(train_set)
        if dev_set:
            report = _epoch_f1(params, dev_set, scheme)
            named = report.groups["named"].f1
            nominal = report.groups["nominal"].f1
            overall = report.overall_f1
            cols = [f"{named:.4f}", f"{nominal:.4f}", f"{overall:.4f}"]
            if overall > best_f1:
                best_f1 = overall
                best = params.copy()
        else:
            cols = ["-", "-", "-"]
            best = params.copy()
        log.append("\t".join([str(epoch), f"{lr:.10g}", f"{mean_q:.6f}", *cols]))
        if epoch_hook is not None and epoch_hook(epoch, params):
            break
    return best, log


# ---------------------------------------------------------------------------
# Serialization

MODEL_MAGIC = b"MMNERBIN"
MODEL_VERSION = 1


class ModelIOError(Exception):
    """Base class for model file problems."""


class ModelVersionError(ModelIOError):
    """Wrong magic or unsupported format version."""


class ModelTruncatedError(ModelIOError):
    """File ends before the declared content does."""


class ModelShapeError(ModelIOError):
    """Tensor inventory or shapes disagree with the metadata."""


def _meta_to_json(meta: ModelMeta, token_trainable: bool) -> bytes:
    doc = {
        "labels": list(meta.scheme.labels),
        "entity_types": [list(pair) for pair in meta.scheme.entity_types],
        "outside": meta.scheme.outside_label,
        "mode": meta.mode,
        "bigrams": meta.bigrams,
        "window": meta.window,
        "d_token": meta.d_token,
        "d_feature": meta.d_feature,
        "hidden_dim": meta.hidden_dim,
        "token_itos": list(meta.token_itos),
        "bigram_itos": list(meta.bigram_itos),
        "token_trainable": token_trainable,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _meta_from_json(blob: bytes) -> tuple[ModelMeta, bool]:
    doc = json.loads(blob.decode("utf-8"))
    scheme = TagScheme(
        tuple(doc["labels"]),
        tuple((c, k) for c, k in doc["entity_types"]),
        doc["outside"],
    )
    meta = ModelMeta(
        scheme=scheme,
        mode=doc["mode"],
        bigrams=doc["bigrams"],
        window=doc["window"],
        d_token=doc["d_token"],
        d_feature=doc["d_feature"],
        hidden_dim=doc["hidden_dim"],
        token_itos=tuple(doc["token_itos"]),
        bigram_itos=tuple(doc["bigram_itos"]),
    )
    return meta, doc["token_trainable"]


def save_model(params: ModelParams, path: str) -> None:
    """Write the versioned binary model file (atomically: tmp then rename).

    Layout, all integers little-endian: 8-byte magic, uint32 version,
    uint32 metadata length + UTF-8 JSON metadata, uint32 tensor count, then
    per tensor: uint16 name length + name, uint8 rank, rank x uint64 dims,
    float64 values row-major.
    """
    chunks = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION)]
    meta_blob = _meta_to_json(params.meta, params.token_table.trainable)
    chunks.append(struct.pack("<I", len(meta_blob)))
    chunks.append(meta_blob)
    tensors = params.named_tensors()
    chunks.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ModelTruncatedError(
                f"file truncated: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.blob) - self.pos}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _expected_shapes(meta: ModelMeta) -> dict[str, tuple[int, ...]]:
    width = meta.input_width
    h, n = meta.hidden_dim, meta.scheme.n_labels
    shapes = {"emb_token": (len(meta.token_itos), meta.d_token)}
    if meta.mode == "segfeat":
        from .corpus import SEG_VOCAB

        shapes["emb_seg"] = (len(SEG_VOCAB), meta.d_feature)
    if meta.bigrams:
        shapes["emb_bigram"] = (len(meta.bigram_itos), meta.d_feature)
    shapes["lstm_fwd_w"] = (4 * h, width + h)
    shapes["lstm_fwd_b"] = (4 * h,)
    shapes["lstm_bwd_w"] = (4 * h, width + h)
    shapes["lstm_bwd_b"] = (4 * h,)
    shapes["proj_w"] = (n, 2 * h)
    shapes["proj_b"] = (n,)
    shapes["transitions"] = (n + 1, n)
    return shapes


def load_model(path: str) -> ModelParams:
    """Read a model file back; inverse of :func:`save_model`, bit-exact."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ModelVersionError("not a model file (bad magic)")
    (version,) = reader.unpack("<I")
    if version != MODEL_VERSION:
        raise ModelVersionError(f"unsupported model file version {version}")
    (meta_len,) = reader.unpack("<I")
    try:
        meta, token_trainable = _meta_from_json(reader.take(meta_len))
    except (ValueError, KeyError) as exc:
        raise ModelShapeError(f"bad metadata block: {exc}") from None
    (n_tensors,) = reader.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}Q")
        count = 1
        for d in shape:
            count *= d
        data = reader.take(8 * count)
        tensors[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    if reader.pos != len(reader.blob):
        raise ModelShapeError(f"{len(reader.blob) - reader.pos} trailing bytes after last tensor")

    expected = _expected_shapes(meta)
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise ModelShapeError(f"tensor inventory mismatch: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ModelShapeError(
                f"tensor {name}: expected shape {shape}, found {tensors[name].shape}"
            )

    width = meta.input_width
    token_table = EmbeddingTable(meta.d_token, tensors["emb_token"], token_trainable)
    seg_table = None
    if "emb_seg" in tensors:
        seg_table = EmbeddingTable(meta.d_feature, tensors["emb_seg"])
    bigram_table = None
    if "emb_bigram" in tensors:
        bigram_table = EmbeddingTable(meta.d_feature, tensors["emb_bigram"])
    return ModelParams(
        meta=meta,
        token_table=token_table,
        seg_table=seg_table,
        bigram_table=bigram_table,
        fwd=LstmParams(width, meta.hidden_dim, tensors["lstm_fwd_w"], tensors["lstm_fwd_b"]),
        bwd=LstmParams(width, meta.hidden_dim, tensors["lstm_bwd_w"], tensors["lstm_bwd_b"]),
        proj=ProjectionParams(tensors["proj_w"], tensors["proj_b"]),
        transitions=tensors["transitions"],
    )


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    """Worst relative error per tensor plus the overall worst offender."""

    per_tensor: dict[str, float] = field(default_factory=dict)
    resamples: int = 0

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.per_tensor, key=self.per_tensor.get)
        return name, self.per_tensor[name]

    def passed(self, tol: float = 1e-4) -> bool:
        return all(err <= tol for err in self.per_tensor.values())


def augmented_gap(sentence: Sentence, params: ModelParams, trigger: Trigger) -> float:
    """Gap between the best and second-best augmented scores, over the full
    sequence space (exhaustive beam). Small gaps make q_i non-differentiable
    and finite differences meaningless; callers resample such instances."""
    gold = sentence.gold_labels
    cache = _forward(sentence, params)
    em, trans = cache.em, params.transitions
    n_all = em.n_labels ** em.n
    if not trigger.needs_rerank:
        cost = np.full(em.log_probs.shape, trigger.kappa)
        cost[np.arange(len(gold)), gold] = 0.0
        em = EmissionMatrix(em.probs, em.log_probs + cost)
        scored = beam_topk(em, trans, n_all)
        return scored[0].score - scored[1].score if len(scored) > 1 else np.inf
    augs = sorted(
        (c.score + trigger.delta(gold, c.labels, params.meta.scheme)
         for c in beam_topk(em, trans, n_all)),
        reverse=True,
    )
    return augs[0] - augs[1] if len(augs) > 1 else np.inf


def finite_difference_check(
    sentence: Sentence,
    params: ModelParams,
    trigger: Trigger,
    beam_k: int,
    eps: float = 1e-4,
    corrupt: str | None = None,
) -> GradCheckReport:
    """Central-difference check of q_i against the analytic subgradient.

    Every element of every trainable tensor is perturbed by +-eps; the
    relative error |analytic - numeric| / max(1, |analytic|, |numeric|) is
    maximized per tensor. ``corrupt`` names a tensor whose analytic gradient
    gets deliberately broken (fault-injection hook for testing the checker).
    """
    _, _, grads = instance_gradients(sentence, params, trigger, beam_k)
    if grads is None:
        grads = {}
    if corrupt is not None:
        broken = grads.get(corrupt)
        if broken is None:
            broken = zero_grads(params)[corrupt]
        broken.flat[0] += 1.0
        grads[corrupt] = broken

    report = GradCheckReport()
    for name, theta in trainable_tensors(params).items():
        analytic = grads.get(name)
        worst = 0.0
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + eps
            q_plus, _ = instance_loss(sentence, params, trigger, beam_k)
            theta[idx] = orig - eps
            q_minus, _ = instance_loss(sentence, params, trigger, beam_k)
            theta[idx] = orig
            numeric = (q_plus - q_minus) / (2.0 * eps)
            a = float(analytic[idx]) if analytic is not None else 0.0
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
        report.per_tensor[name] = worst
    return report
