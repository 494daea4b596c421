import numpy as np
import pytest

from pairdisc.decoder import decode_backward, decode_teacher_forced
from pairdisc.discriminator import embed_pair_batch, global_loss
from pairdisc.encoder import encode, encode_backward
from pairdisc.model import (build_store, check_model_gradients, discriminator_prefix, forward_backward,
                            phase_for_step, random_pairs)
from pairdisc.testing import random_batch, tiny_config, tiny_store
from pairdisc.text import ParaphrasePair


def grads(store):
    return {name: store.grad(name).copy() for name in store.names()}


@pytest.mark.parametrize("variant", ["EDD-LG-shared", "ED-L", "EDD-G", "EDD-LG", "EDD-alt"])
def test_joint_gradient_matches_finite_differences(variant):
    cfg = tiny_config(variant)
    store = tiny_store(cfg)
    report = check_model_gradients(store, random_batch(cfg), cfg, samples=200, seed=0)
    assert report.checked > 0
    assert report.max_rel_error < 1e-4, report.worst
    assert store.grad_norm() == 0.0


def test_gradient_check_with_cosine_similarity():
    cfg = tiny_config(similarity="cosine", margin=0.5)
    report = check_model_gradients(tiny_store(cfg), random_batch(cfg), cfg, samples=100)
    assert report.max_rel_error < 1e-4, report.worst


def test_ungated_gradient_equals_gated_when_every_margin_is_active():
    cfg = tiny_config(gradient_mode="ungated")
    gated_cfg = tiny_config(gradient_mode="gated")
    batch = random_batch(cfg)
    a, b = tiny_store(cfg), tiny_store(cfg)
    out = forward_backward(a, batch, cfg)
    forward_backward(b, batch, gated_cfg)
    assert out.active == len(batch) * (len(batch) - 1)
    for name in a.names():
        np.testing.assert_array_equal(a.grad(name), b.grad(name))


def test_local_only_matches_plain_sequence_to_sequence():
    cfg = tiny_config("ED-L")
    batch = random_batch(cfg)
    store = tiny_store(cfg)
    out = forward_backward(store, batch, cfg)
    assert out.global_ == 0.0
    assert out.margins.size == 0
    joint = grads(store)

    plain = tiny_store(cfg)
    losses = []
    for pair in batch:
        f, enc_cache = encode(pair.source, plain)
        _, loss, dec_cache = decode_teacher_forced(f, pair.target, plain)
        losses.append(loss)
        encode_backward(plain, enc_cache, decode_backward(plain, dec_cache, 1.0 / len(batch), None))
    assert out.local == pytest.approx(np.mean(losses), rel=1e-15)
    for name, grad in joint.items():
        np.testing.assert_allclose(plain.grad(name), grad, rtol=1e-12, atol=1e-15)


def test_zero_global_weight_reduces_to_local_only():
    batch = random_batch(tiny_config())
    a = tiny_store(tiny_config("ED-L"))
    b = tiny_store(tiny_config("EDD-LG-shared", global_weight=0.0))
    out_a = forward_backward(a, batch, tiny_config("ED-L"))
    out_b = forward_backward(b, batch, tiny_config("EDD-LG-shared", global_weight=0.0))
    assert out_a.total == out_b.total
    for name in a.names():
        np.testing.assert_array_equal(a.grad(name), b.grad(name))


def test_global_loss_reaches_the_source_encoder_through_the_decoder():
    cfg = tiny_config("EDD-LG", local_weight=0.0)
    store = tiny_store(cfg)
    out = forward_backward(store, random_batch(cfg), cfg)
    assert out.local > 0 and out.global_ > 0
    assert np.abs(store.grad("enc.lstm.Wx")).sum() > 0
    assert np.abs(store.grad("dec.out.W")).sum() > 0
    assert np.abs(store.grad("disc.lstm.Wx")).sum() > 0


def test_unshared_variant_gets_its_own_discriminator_copy():
    cfg = tiny_config("EDD-LG")
    store = tiny_store(cfg)
    assert discriminator_prefix(store) == "disc"
    for name in store.names("enc."):
        np.testing.assert_array_equal(store.value("disc." + name[4:]), store.value(name))
    shared = tiny_store(tiny_config("EDD-LG-shared"))
    assert discriminator_prefix(shared) == "enc"
    assert not shared.names("disc.")


def test_all_variants_start_from_the_same_weights():
    dims = tiny_config().dims
    a, b = build_store(dims, 3, shared=True), build_store(dims, 3, shared=False)
    for name in a.names():
        np.testing.assert_array_equal(a.value(name), b.value(name))


def test_local_phase_leaves_the_discriminator_untouched():
    cfg = tiny_config("EDD-LG")
    store = tiny_store(cfg)
    out = forward_backward(store, random_batch(cfg), cfg, phase="local")
    assert out.global_ == 0.0
    for name in store.names("disc."):
        assert not store.grad(name).any()


def test_global_phase_ignores_the_local_loss_in_the_total():
    cfg = tiny_config("EDD-alt")
    out = forward_backward(tiny_store(cfg), random_batch(cfg), cfg, phase="global")
    assert out.total == pytest.approx(cfg.global_weight * out.global_)


def test_alternating_schedule():
    alt = tiny_config("EDD-alt")
    assert [phase_for_step(alt, s) for s in range(4)] == ["local", "global", "local", "global"]
    assert phase_for_step(tiny_config("EDD-LG-shared"), 1) == "both"


def test_forward_only_accumulates_nothing_and_is_repeatable():
    cfg = tiny_config()
    store = tiny_store(cfg)
    batch = random_batch(cfg)
    first = forward_backward(store, batch, cfg, backward=False)
    second = forward_backward(store, batch, cfg, backward=False)
    assert store.grad_norm() == 0.0
    assert first.total == second.total
    assert first.active == len(batch) * (len(batch) - 1)


def test_identical_batches_give_identical_gradients():
    cfg = tiny_config()
    batch = random_batch(cfg)
    a, b = tiny_store(cfg), tiny_store(cfg)
    forward_backward(a, batch, cfg)
    forward_backward(b, batch, cfg)
    for name in a.names():
        assert a.grad(name).tobytes() == b.grad(name).tobytes()


def test_single_pair_batch_is_local_only():
    cfg = tiny_config("ED-L", batch_size=1)
    out = forward_backward(tiny_store(cfg), [ParaphrasePair(source=[3], target=[4])], cfg)
    assert out.global_ == 0.0


def test_random_pairs_avoid_reserved_ids():
    pairs = random_pairs(50, 20, 5, seed=2)
    for pair in pairs:
        for seq in (pair.source, pair.target):
            assert 1 <= len(seq) <= 5
            assert all(3 <= t < 20 for t in seq)
    assert random_pairs(5, 20, 5, seed=2) == pairs[:5]


def test_global_term_is_the_batch_hinge_sum_per_example():
    cfg = tiny_config("EDD-LG-shared", batch_size=4)
    store = tiny_store(cfg)
    batch = random_batch(cfg)
    out = forward_backward(store, batch, cfg, backward=False)
    softs = [decode_teacher_forced(encode(p.source, store)[0], p.target, store)[0] for p in batch]
    emb, _, _ = embed_pair_batch(softs, [p.target for p in batch], store)
    assert out.global_ == pytest.approx(global_loss(emb).loss / len(batch), rel=1e-12)
    assert out.total == pytest.approx(out.local + out.global_, rel=1e-12)
