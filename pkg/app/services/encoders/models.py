"""
Context classification models: input embedding -> encoder -> classifier head.

Model kinds and their context vector sizes:
- cnn:         t      (convolution + max pooling)
- pcnn:        3t     (convolution + piecewise max pooling)
- att-cnn-e:   m + t  (participant feature attention, averaged, + CNN branch)
- att-pcnn-e:  m + 3t (participant feature attention, averaged, + PCNN branch)
- bilstm:      2h     (bi-directional LSTM, column-wise max over states)
- att-bilstm:  2h     (bi-directional LSTM with self attention)
"""
import io
import json
import logging
import zipfile
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.services.autodiff.optim import xavier_init
from app.services.autodiff.tensor import Node, concat, constant, gather, getitem, parameter
from app.services.embeddings.embedding_manager import FEATURE_TABLES, InputEmbedding, feature_table_sizes
from app.services.encoders import layers

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
ZIP_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


class EncoderKind(str, Enum):
    CNN = "cnn"
    PCNN = "pcnn"
    ATT_CNN_E = "att-cnn-e"
    ATT_PCNN_E = "att-pcnn-e"
    BILSTM = "bilstm"
    ATT_BILSTM = "att-bilstm"

    @property
    def has_attention(self) -> bool:
        return self in (EncoderKind.ATT_CNN_E, EncoderKind.ATT_PCNN_E, EncoderKind.ATT_BILSTM)

    @property
    def is_recurrent(self) -> bool:
        return self in (EncoderKind.BILSTM, EncoderKind.ATT_BILSTM)

    @property
    def is_piecewise(self) -> bool:
        return self in (EncoderKind.PCNN, EncoderKind.ATT_PCNN_E)


class EncoderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    kind: EncoderKind = EncoderKind.CNN
    conv_window: int = Field(default=3, ge=1)
    filter_count: int = Field(default=300, ge=1)
    lstm_hidden: int = Field(default=128, ge=1)
    mlp_hidden: int = Field(default=10, ge=1)
    class_count: int = Field(default=3, ge=2, le=3)
    keep_prob: float = Field(default=0.8, gt=0.0, le=1.0)
    bilstm_merge: str = Field(default="concat", pattern="^(concat|sum)$")


class CheckpointError(ValueError):
    """Raised for unreadable or incompatible checkpoints."""


@dataclass
class AttentionTrace:
    """Attention weights of one context: one vector per attended feature."""
    alphas: List[np.ndarray] = field(default_factory=list)

    def averaged(self) -> np.ndarray:
        return np.mean(self.alphas, axis=0)


class ContextModel:
    """Parameters and forward pass of one context classification model."""

    def __init__(
        self,
        config: EncoderConfig,
        d_word: int,
        d_feat: int = 5,
        n_max: int = 50,
        seed: int = 0,
    ):
        self.config = config
        self.d_word = d_word
        self.d_feat = d_feat
        self.n_max = n_max
        self.seed = seed
        self.params: "OrderedDict[str, Node]" = OrderedDict()
        self._build(np.random.default_rng(seed))
        logger.info(
            f"Initialized {config.kind.value} model: m={self.input_dim}, |s|={self.context_dim}, "
            f"{sum(p.size for p in self.params.values())} parameters"
        )

    @property
    def kind(self) -> EncoderKind:
        return self.config.kind

    @property
    def input_dim(self) -> int:
        return self.d_word + len(FEATURE_TABLES) * self.d_feat

    @property
    def state_dim(self) -> int:
        h = self.config.lstm_hidden
        return 2 * h if self.config.bilstm_merge == "concat" else h

    @property
    def context_dim(self) -> int:
        t, m = self.config.filter_count, self.input_dim
        return {
            EncoderKind.CNN: t,
            EncoderKind.PCNN: 3 * t,
            EncoderKind.ATT_CNN_E: m + t,
            EncoderKind.ATT_PCNN_E: m + 3 * t,
            EncoderKind.BILSTM: self.state_dim,
            EncoderKind.ATT_BILSTM: self.state_dim,
        }[self.kind]

    def _add(self, name: str, value) -> Node:
        self.params[name] = parameter(value, name)
        return self.params[name]

    def _build(self, rng: np.random.Generator):
        cfg, m = self.config, self.input_dim
        for name, rows in feature_table_sizes(self.n_max).items():
            self._add(f"feat.{name}", xavier_init((rows, self.d_feat), rng))

        if not self.kind.is_recurrent:
            t, l = cfg.filter_count, cfg.conv_window
            self._add("conv.W", xavier_init((t, l * m), rng))
            self._add("conv.b", np.zeros(t))
        if self.kind in (EncoderKind.ATT_CNN_E, EncoderKind.ATT_PCNN_E):
            self._add("att.W_we", xavier_init((cfg.mlp_hidden, 2 * m), rng))
            self._add("att.b_we", np.zeros(cfg.mlp_hidden))
            self._add("att.W_a", xavier_init((cfg.mlp_hidden,), rng))
            self._add("att.b_a", np.zeros(1))
        if self.kind.is_recurrent:
            h = cfg.lstm_hidden
            for direction in ("fwd", "bwd"):
                self._add(f"lstm.{direction}.W_x", xavier_init((4 * h, m), rng))
                self._add(f"lstm.{direction}.W_h", xavier_init((4 * h, h), rng))
                self._add(f"lstm.{direction}.b", np.zeros(4 * h))
        if self.kind is EncoderKind.ATT_BILSTM:
            self._add("att.w", xavier_init((self.state_dim,), rng))

        self._add("out.W_r", xavier_init((cfg.class_count, self.context_dim), rng))
        self._add("out.b_r", np.zeros(cfg.class_count))

    def parameters(self) -> "OrderedDict[str, Node]":
        return self.params

    def input_matrix(self, embedding: InputEmbedding) -> Node:
        """X (n x m) for the unpadded part of the context."""
        n = embedding.length
        blocks = [constant(embedding.word_vectors[:n])]
        for k, name in enumerate(FEATURE_TABLES):
            blocks.append(gather(self.params[f"feat.{name}"], embedding.feature_indices[:n, k]))
        return concat(blocks, axis=1)

    def feature_tables(self) -> Dict[str, np.ndarray]:
        return {name: self.params[f"feat.{name}"].value for name in FEATURE_TABLES}

    def encode(self, embedding: InputEmbedding) -> Tuple[Node, AttentionTrace]:
        """Embedded context vector s and the attention weights (empty if none)."""
        p, cfg = self.params, self.config
        X = self.input_matrix(embedding)
        trace = AttentionTrace()

        if self.kind.is_recurrent:
            H = layers.bilstm(
                X,
                (p["lstm.fwd.W_x"], p["lstm.fwd.W_h"], p["lstm.fwd.b"]),
                (p["lstm.bwd.W_x"], p["lstm.bwd.W_h"], p["lstm.bwd.b"]),
                merge=cfg.bilstm_merge,
            )
            if self.kind is EncoderKind.BILSTM:
                return layers.max_pool(H), trace
            s, alpha = layers.self_attention(H, p["att.w"])
            trace.alphas.append(alpha.value)
            return s, trace

        C = layers.convolve(X, p["conv.W"], cfg.conv_window) + p["conv.b"]
        if self.kind.is_piecewise:
            pooled = layers.piecewise_max_pool(C, embedding.subj_pos, embedding.obj_pos)
        else:
            pooled = layers.max_pool(C)
        if not self.kind.has_attention:
            return pooled, trace

        attended = []
        for position in (embedding.obj_pos, embedding.subj_pos):
            s_hat, alpha = layers.feature_attention(
                X, getitem(X, position), p["att.W_we"], p["att.b_we"], p["att.W_a"], p["att.b_a"]
            )
            attended.append(s_hat)
            trace.alphas.append(alpha.value)
        return concat([layers.average(attended), pooled], axis=0), trace

    def forward(
        self,
        embedding: InputEmbedding,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[Node, AttentionTrace]:
        s, trace = self.encode(embedding)
        probs = layers.classify(
            s, self.params["out.W_r"], self.params["out.b_r"], self.config.keep_prob, training, rng
        )
        return probs, trace

    def predict_proba(self, embedding: InputEmbedding) -> np.ndarray:
        return self.forward(embedding)[0].value

    def predict(self, embedding: InputEmbedding) -> int:
        return int(np.argmax(self.predict_proba(embedding)))

    def attention(self, embedding: InputEmbedding) -> AttentionTrace:
        if not self.kind.has_attention:
            raise ValueError(f"Model kind '{self.kind.value}' has no attention weights")
        return self.encode(embedding)[1]

    def save(self, file_path: Path):
        """Write a deterministic zip container: meta.json + one .npy per parameter."""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "format": CHECKPOINT_FORMAT,
            "encoder": self.config.model_dump(mode="json"),
            "d_word": self.d_word,
            "d_feat": self.d_feat,
            "n_max": self.n_max,
            "seed": self.seed,
            "parameters": list(self.params),
        }
        with zipfile.ZipFile(file_path, "w", compression=zipfile.ZIP_STORED) as archive:
            archive.writestr(zipfile.ZipInfo("meta.json", ZIP_TIMESTAMP), json.dumps(meta, sort_keys=True))
            for name, node in self.params.items():
                buffer = io.BytesIO()
                np.lib.format.write_array(buffer, np.ascontiguousarray(node.value), allow_pickle=False)
                archive.writestr(zipfile.ZipInfo(f"{name}.npy", ZIP_TIMESTAMP), buffer.getvalue())
        logger.info(f"Saved {self.kind.value} checkpoint to {file_path}")

    @classmethod
    def load(cls, file_path: Path) -> "ContextModel":
        try:
            with zipfile.ZipFile(file_path, "r") as archive:
                meta = json.loads(archive.read("meta.json"))
                if meta.get("format") != CHECKPOINT_FORMAT:
                    raise CheckpointError(
                        f"{file_path}: unsupported checkpoint format {meta.get('format')}"
                    )
                model = cls(
                    EncoderConfig.model_validate(meta["encoder"]),
                    d_word=meta["d_word"],
                    d_feat=meta["d_feat"],
                    n_max=meta["n_max"],
                    seed=meta["seed"],
                )
                missing = sorted(set(model.params) - set(meta["parameters"]))
                if missing:
                    raise CheckpointError(f"{file_path}: missing parameters {missing}")
                for name in meta["parameters"]:
                    if name not in model.params:
                        raise CheckpointError(f"{file_path}: unexpected parameter '{name}'")
                    array = np.lib.format.read_array(io.BytesIO(archive.read(f"{name}.npy")))
                    if array.shape != model.params[name].shape:
                        raise CheckpointError(
                            f"{file_path}: parameter '{name}' has shape {array.shape}, "
                            f"expected {model.params[name].shape}"
                        )
                    model.params[name].value = np.array(array, dtype=np.float64)
        except (KeyError, zipfile.BadZipFile, json.JSONDecodeError) as e:
            raise CheckpointError(f"{file_path}: unreadable checkpoint ({e})")
        logger.info(f"Loaded {model.kind.value} checkpoint from {file_path}")
        return model
