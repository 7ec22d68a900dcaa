"""Image to superpixels in one call."""
from __future__ import annotations

import numpy as np

from .clustering import cluster
from .decoder import DecoderConfig, EmbeddingMap, extract_embeddings


def clustering_rng(seed: int) -> np.random.Generator:
    # separate from the per-decoder streams, which are keyed by (seed, index)
    return np.random.default_rng([seed, 0xC1])


def generate_superpixels(img: np.ndarray, cfg: DecoderConfig, clusters: int,
                         threads: int = 1, **cluster_kwargs) -> tuple[np.ndarray, EmbeddingMap]:
    emb = extract_embeddings(img, cfg, threads=threads)
    labels = cluster(emb.features, clusters, clustering_rng(cfg.seed), **cluster_kwargs)
    return labels, emb
