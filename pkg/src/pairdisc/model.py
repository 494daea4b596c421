"""Parameter construction and the joint forward/backward pass over one batch."""
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .decoder import decode_backward, decode_teacher_forced, init_decoder
from .discriminator import embed_pair_batch, global_loss
from .encoder import encode, encode_backward, init_encoder
from .gradcheck import LossEvaluation, finite_diff_check, sample_coordinates
from .models import GradCheckReport, ModelDims, TrainConfig
from .params import ParameterStore
from .text import ParaphrasePair

Phase = Literal["both", "local", "global"]


def build_store(dims: ModelDims, seed: int, shared: bool = True) -> ParameterStore:
    """Create and initialize every parameter of the model.

    Initialization order is fixed (encoder, decoder, then the optional
    unshared discriminator copy) so all variants share the same enc/dec values.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    init_encoder(store, "enc", dims.vocab_size, dims.embed_dim, dims.hidden_dim,
                 dims.conv_width, rng, dims.init_scale)
    init_decoder(store, dims.vocab_size, dims.embed_dim, dims.hidden_dim, rng, dims.init_scale)
    if not shared:
        for name in store.names("enc."):
            store.add("disc." + name[len("enc."):], store.value(name).copy())
    return store.freeze()


def discriminator_prefix(store: ParameterStore) -> str:
    return "disc" if "disc.embed" in store else "enc"


def phase_weights(cfg: TrainConfig, phase: Phase) -> Tuple[float, float]:
    if phase == "local":
        return cfg.local_weight, 0.0
    if phase == "global":
        return 0.0, cfg.global_weight
    return cfg.local_weight, cfg.global_weight


def phase_for_step(cfg: TrainConfig, step: int) -> Phase:
    """The alternating variant updates with the local loss on even steps, the global loss on odd ones."""
    if cfg.variant != "EDD-alt":
        return "both"
    return "local" if step % 2 == 0 else "global"


class BatchOutcome(NamedTuple):
    local: float
    global_: float
    total: float
    margins: np.ndarray
    active: int
    floor_hits: int


def forward_backward(store: ParameterStore, batch: Sequence[ParaphrasePair], cfg: TrainConfig,
                     backward: bool = True, phase: Phase = "both") -> BatchOutcome:
    """Evaluate the weighted total loss on ``batch`` and, optionally, accumulate its gradient.

    Examples are processed in batch order; gradient contributions are added in
    that same fixed order.
    """
    local_weight, global_weight = phase_weights(cfg, phase)
    N = len(batch)
    enc_caches, dec_caches, softs, local_losses = [], [], [], []
    floor_hits = 0
    for pair in batch:
        f, enc_cache = encode(pair.source, store, "enc")
        soft, loss, dec_cache = decode_teacher_forced(f, pair.target, store)
        enc_caches.append(enc_cache)
        dec_caches.append(dec_cache)
        softs.append(soft)
        local_losses.append(loss)
        floor_hits += dec_cache.floor_hits
    local = float(np.mean(local_losses))

    global_value, margins, active = 0.0, np.zeros(0), 0
    dsoft: List[Optional[np.ndarray]] = [None] * N
    result = None
    if global_weight > 0:
        prefix = discriminator_prefix(store)
        emb, caches_p, caches_g = embed_pair_batch(softs, [p.target for p in batch], store, prefix)
        result = global_loss(emb, cfg.margin, cfg.similarity, cfg.gradient_mode)
        # mean over examples of each hinge sum over its in-batch negatives
        global_value, margins, active = result.loss / N, result.margins, result.active

    total = local_weight * local + global_weight * global_value

    if backward:
        if result is not None:
            for i in range(N):
                encode_backward(store, caches_g[i], global_weight / N * result.d_eg[i])
                dsoft[i] = encode_backward(store, caches_p[i], global_weight / N * result.d_ep[i])
        for i in range(N):
            df = decode_backward(store, dec_caches[i], local_weight / N, dsoft[i])
            encode_backward(store, enc_caches[i], df)

    return BatchOutcome(local, global_value, total, margins, active, floor_hits)


def batch_loss_fn(batch: Sequence[ParaphrasePair], cfg: TrainConfig, phase: Phase = "both"):
    """Pure loss function of the store, for finite-difference checks."""
    def loss_fn(store: ParameterStore) -> LossEvaluation:
        out = forward_backward(store, batch, cfg, backward=False, phase=phase)
        return LossEvaluation(loss=out.total, margins=out.margins)
    return loss_fn


def random_pairs(count: int, vocab_size: int, max_len: int, seed: int) -> List[ParaphrasePair]:
    """Random pairs of word ids (reserved ids excluded) with lengths in 1..max_len."""
    rng = np.random.default_rng(seed)

    def sentence() -> List[int]:
        length = int(rng.integers(1, max_len + 1))
        return [int(t) for t in rng.integers(3, vocab_size, size=length)]

    return [ParaphrasePair(source=sentence(), target=sentence()) for _ in range(count)]


def check_model_gradients(store: ParameterStore, batch: Sequence[ParaphrasePair], cfg: TrainConfig,
                          samples: int = 200, seed: int = 0, h: float = 1e-5,
                          phase: Phase = "both", min_abs_grad: Optional[float] = 1e-7) -> GradCheckReport:
    """Finite-difference check of the full joint loss on ``batch``."""
    store.zero_grad()
    forward_backward(store, batch, cfg, backward=True, phase=phase)
    coords = sample_coordinates(store, samples, seed=seed, min_abs_grad=min_abs_grad)
    report = finite_diff_check(batch_loss_fn(batch, cfg, phase), store, h=h, sample=coords)
    store.zero_grad()
    return report
