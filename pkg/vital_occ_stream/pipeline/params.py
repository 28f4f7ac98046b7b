"""
Every learned parameter block of the pipeline, gathered from one WeightStore.

Block names (``fpn.level1``, ``streamagg.body``, ``queryagg.dqa.gate``,
``decoder.mlp.1`` ...) are the keys of weight files.  With ``seed`` set, any
missing block is created with the seeded-uniform initialiser (untrained
weights mode); without it a missing block is a configuration error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from vital_occ_stream.core.config import PipelineConfig
from vital_occ_stream.decoder.models import DecoderParams
from vital_occ_stream.numerics.weights import WeightStore
from vital_occ_stream.query.models import DeformAttnParams, DetectorParams, DqaParams
from vital_occ_stream.stream.models import AuxHeadParams, FpnParams, RefineNetParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModelParams:
    fpn: FpnParams
    refine: RefineNetParams
    aux: AuxHeadParams
    detector: DetectorParams
    deform_attn: DeformAttnParams
    dqa: DqaParams
    decoder: DecoderParams

    @classmethod
    def from_store(cls, config: PipelineConfig, store: WeightStore, seed: Optional[int] = None) -> "ModelParams":
        dims = config.model
        c = dims.channels
        params = cls(
            fpn=FpnParams.from_store(
                store, dims.init_channels, dims.fpn_level1_channels, dims.fpn_level2_channels, c, seed=seed
            ),
            refine=RefineNetParams.from_store(store, c, dims.cbam_reduction, dims.spatial_kernel, seed=seed),
            aux=AuxHeadParams.from_store(
                store, c, dims.occupied_hidden, dims.decoder_upsample_channels, dims.decoder_hidden, seed=seed
            ),
            detector=DetectorParams.from_store(store, c, seed=seed),
            deform_attn=DeformAttnParams.from_store(
                store, c, config.deform_attn.heads, config.deform_attn.points, seed=seed
            ),
            dqa=DqaParams.from_store(store, c, dims.ffn_expansion, seed=seed),
            decoder=DecoderParams.from_store(
                store, "decoder", c, dims.decoder_upsample_channels, dims.decoder_hidden, seed=seed
            ),
        )
        logger.info(
            f"⚖️  WEIGHTS: {len(store)} arrays, {store.total_parameters():,} parameters"
            + (f" (untrained, seed={seed})" if seed is not None else "")
        )
        return params

    @classmethod
    def random(cls, config: PipelineConfig, seed: Optional[int] = None) -> "ModelParams":
        """Untrained-weights parameters seeded from ``seed`` or ``config.runtime.seed``."""
        return cls.from_store(config, WeightStore(), config.runtime.seed if seed is None else seed)
