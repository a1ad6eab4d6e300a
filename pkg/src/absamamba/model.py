"""The full aspect sentiment classifier and its ablation variants."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, dropout
from .config import ModelConfig
from .data import Batch
from .encoder import BiLstm, EmbeddingTables, bilstm, embed
from .fusion import Classifier, FcMerge, KanGates, fc_merge, gated_fuse, kan_gate, logits, mean_pool
from .kan import BSplineGrid
from .mambaformer import MambaFormerLayer, mambaformer_stack
from .nn import Module
from .syngcn import SynGcn, normalize_adjacency, syngcn_forward


class AbsaModel(Module):
    """Embedding -> BiLSTM -> (SynGCN || MambaFormer) -> fusion -> mean pool -> classifier.

    Which branches exist is decided by ``config.variant``; absent branches
    contribute no parameters.
    """

    def __init__(self, config: ModelConfig, vocab_size: int, n_tags: int, rng: np.random.Generator):
        self.config = config
        r = config.init_range
        d = config.model_dim
        self.embeddings = EmbeddingTables(
            vocab_size, config.max_len, n_tags, rng, config.word_dim, config.pos_dim, config.tag_dim, r
        )
        self.encoder = BiLstm(config.embed_dim, config.hidden, rng, r)
        self.syngcn = SynGcn(d, config.gcn_layers, rng, r) if config.use_syngcn else None
        self.mambaformer = [
            MambaFormerLayer(
                d, rng, config.heads, config.ssm_state, config.conv_width, config.expand,
                use_mha=config.use_mha, use_mamba=config.use_mamba, init_range=r,
            )
            for _ in range(config.mambaformer_layers)
        ]
        self.gates = None
        self.merge = None
        if config.use_kan_gate:
            grid = BSplineGrid.uniform(config.kan_grid, config.kan_degree, -config.kan_range, config.kan_range)
            self.gates = KanGates(d, rng, grid, config.kan_base_branch)
        elif config.use_syngcn:
            self.merge = FcMerge(d, rng, r)
        self.classifier = Classifier(d, rng, r)
        self.training = True

    def forward(self, batch: Batch, rng: np.random.Generator | None = None) -> Tensor:
        """Class logits ``(B, 3)``; ``rng`` drives dropout and is required in training mode."""
        cfg = self.config
        train = self.training
        pad = batch.pad_mask
        x = embed(batch.token_ids, batch.positions, batch.postag_ids, self.embeddings)
        x = dropout(x, cfg.dropout_embed, rng, train)
        H = bilstm(x, self.encoder, pad)

        H_sem = mambaformer_stack(H, self.mambaformer, pad, cfg.dropout_attn, rng, train)
        if self.syngcn is None:
            H_c = H_sem
        else:
            A = normalize_adjacency(batch.adjacency, pad)
            H_syn = syngcn_forward(H, A, self.syngcn.layers, cfg.dropout_gcn, rng, train, pad)
            if self.gates is not None:
                H_c = gated_fuse(H_syn, H_sem, kan_gate(H_syn, self.gates.syn), kan_gate(H_sem, self.gates.sem))
            else:
                H_c = fc_merge(H_syn, H_sem, self.merge)

        pool_mask = batch.aspect_mask if cfg.pool == "aspect" else pad
        return logits(mean_pool(H_c, pool_mask), self.classifier)

    __call__ = forward

    def after_step(self) -> None:
        """Restore invariants broken by an optimizer update (padding rows stay zero)."""
        self.embeddings.zero_padding()
