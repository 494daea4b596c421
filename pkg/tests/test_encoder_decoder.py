import math

import numpy as np
import pytest

from pairdisc.decoder import LOG_FLOOR, decode_backward, decode_teacher_forced, generate_greedy, init_decoder
from pairdisc.encoder import embed_tokens, encode, encode_backward, encoder_names, init_encoder
from pairdisc.errors import DataError, ShapeError
from pairdisc.gradcheck import finite_diff_check
from pairdisc.params import ParameterStore
from pairdisc.text import STOP

V, E, D = 20, 8, 8


def make_store(embed_dim=E, hidden_dim=D, conv_width=0, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    init_encoder(store, "enc", V, embed_dim, hidden_dim, conv_width, rng, scale)
    init_decoder(store, V, embed_dim, hidden_dim, rng, scale)
    return store.freeze()


def soft_one_hot(ids, vocab_size=V):
    out = np.zeros((len(ids), vocab_size))
    out[np.arange(len(ids)), ids] = 1.0
    return out


class TestEncoder:
    def test_parameter_names_are_stable(self):
        store = make_store(conv_width=3)
        assert encoder_names(store, "enc") == ["enc.embed", "enc.conv", "enc.lstm.Wx", "enc.lstm.Wh", "enc.lstm.b"]

    def test_forget_bias_starts_at_one(self):
        b = make_store().value("enc.lstm.b")
        np.testing.assert_array_equal(b[D:2 * D], 1.0)
        np.testing.assert_array_equal(b[:D], 0.0)

    def test_soft_one_hot_matches_hard_path_bitwise(self):
        store = make_store(conv_width=3)
        ids = [4, 9, 4, 17]
        f_hard, _ = encode(ids, store)
        f_soft, _ = encode(soft_one_hot(ids), store)
        assert f_hard.tobytes() == f_soft.tobytes()

    def test_uniform_soft_row_is_the_column_mean(self):
        store = make_store()
        rows, _ = embed_tokens(np.full((1, V), 1.0 / V), store)
        np.testing.assert_allclose(rows[0], store.value("enc.embed").mean(axis=0), atol=1e-15)

    def test_identity_width_one_convolution(self):
        rng = np.random.default_rng(0)
        store = ParameterStore()
        init_encoder(store, "enc", V, E, D, 1, rng, 0.1)
        store.value("enc.conv")[0] = np.eye(E)
        rows, _ = embed_tokens([3, 5], store)
        np.testing.assert_array_equal(rows, store.value("enc.embed")[[3, 5]])

    def test_zero_weights_give_zero_embedding(self):
        store = make_store()
        for name in ("enc.lstm.Wx", "enc.lstm.Wh", "enc.lstm.b"):
            store.value(name)[...] = 0.0
        f, _ = encode([3, 4, 5], store)
        np.testing.assert_array_equal(f, np.zeros(D))

    def test_state_accumulates_over_steps(self):
        store = make_store()
        assert not np.allclose(encode([3], store)[0], encode([3, 4], store)[0])

    def test_invalid_inputs(self):
        store = make_store()
        with pytest.raises(ShapeError):
            encode([], store)
        with pytest.raises(DataError):
            encode([V], store)
        with pytest.raises(DataError):
            encode(np.full((2, V), 0.5), store)

    @pytest.mark.parametrize("conv_width", [0, 3])
    def test_gradient_of_squared_norm(self, conv_width):
        store = make_store(conv_width=conv_width)
        ids = [3, 7, 7, 12]

        def loss(s):
            f, _ = encode(ids, s)
            return float(f @ f)

        store.zero_grad()
        f, cache = encode(ids, store)
        assert encode_backward(store, cache, 2.0 * f) is None
        report = finite_diff_check(loss, store, sample=store.coordinates(encoder_names(store, "enc")))
        assert report.max_rel_error < 1e-4

    def test_soft_input_gradient_along_the_simplex(self):
        store = make_store()
        rng = np.random.default_rng(3)
        P = rng.dirichlet(np.ones(V), size=3)
        f, cache = encode(P, store)
        store.zero_grad()
        dP = encode_backward(store, cache, 2.0 * f)
        h = 1e-6
        for row, a, b in [(0, 1, 2), (1, 5, 19), (2, 0, 10)]:
            v = np.zeros_like(P)
            v[row, a], v[row, b] = 1.0, -1.0
            plus, _ = encode(P + h * v, store)
            minus, _ = encode(P - h * v, store)
            numeric = (plus @ plus - minus @ minus) / (2 * h)
            assert numeric == pytest.approx(dP[row, a] - dP[row, b], rel=1e-5, abs=1e-10)

    def test_backward_is_linear_in_the_upstream_gradient(self):
        store = make_store()
        rng = np.random.default_rng(1)
        g1, g2 = rng.normal(size=D), rng.normal(size=D)
        _, cache = encode([3, 4, 5], store)

        store.zero_grad()
        encode_backward(store, cache, g1 + g2)
        combined = {n: store.grad(n).copy() for n in store.names("enc.")}
        store.zero_grad()
        encode_backward(store, cache, g1)
        encode_backward(store, cache, g2)
        for name, grad in combined.items():
            np.testing.assert_allclose(store.grad(name), grad, atol=1e-14)

    def test_zero_upstream_gradient_accumulates_nothing(self):
        store = make_store()
        _, cache = encode([3, 4], store)
        store.zero_grad()
        encode_backward(store, cache, np.zeros(D))
        assert store.grad_norm() == 0.0


class TestDecoder:
    def test_uniform_predictions_cost_log_v(self):
        store = make_store()
        store.value("dec.out.W")[...] = 0.0
        f, _ = encode([3, 4], store)
        soft, loss, _ = decode_teacher_forced(f, [5, 6, 7], store)
        assert loss == pytest.approx(math.log(V), rel=1e-12)
        np.testing.assert_allclose(soft, 1.0 / V)

    def test_soft_sequence_has_one_row_per_target_token(self):
        store = make_store()
        f, _ = encode([3], store)
        soft, _, cache = decode_teacher_forced(f, [5, 6, 7, 8], store)
        assert soft.shape == (4, V)
        assert cache.probs.shape == (5, V)
        np.testing.assert_allclose(soft.sum(axis=1), 1.0, atol=1e-9)

    def test_near_certain_predictions_cost_nothing(self):
        store = make_store()
        store.value("dec.out.W")[...] = 0.0
        store.value("dec.out.b")[STOP] = 60.0
        f, _ = encode([3], store)
        _, loss, _ = decode_teacher_forced(f, [STOP], store)
        assert 0.0 <= loss < 1e-12

    def test_log_floor_is_counted(self):
        store = make_store()
        store.value("dec.out.W")[...] = 0.0
        store.value("dec.out.b")[5] = -1000.0
        f, _ = encode([3], store)
        _, loss, cache = decode_teacher_forced(f, [5], store)
        assert cache.floor_hits == 1
        assert math.isfinite(loss)
        assert loss >= -math.log(LOG_FLOOR) / 2

    def test_dimension_mismatch(self):
        store = make_store()
        with pytest.raises(ShapeError):
            decode_teacher_forced(np.zeros(D + 1), [3], store)

    @pytest.mark.parametrize("embed_dim", [E, 6])
    def test_gradient_of_local_and_soft_routes(self, embed_dim):
        store = make_store(embed_dim=embed_dim)
        assert ("dec.bridge" in store) == (embed_dim != D)
        rng = np.random.default_rng(2)
        target = [4, 9, 2]
        f0 = rng.normal(scale=0.5, size=D)
        R = rng.normal(size=(len(target), V))

        def loss(s, f=f0):
            soft, local, _ = decode_teacher_forced(f, target, s)
            return local + float(np.sum(soft * R))

        store.zero_grad()
        _, _, cache = decode_teacher_forced(f0, target, store)
        df = decode_backward(store, cache, 1.0, R)
        report = finite_diff_check(loss, store, sample=store.coordinates(store.names("dec.")))
        assert report.max_rel_error < 1e-4

        h = 1e-5
        for k in range(D):
            e = np.zeros(D)
            e[k] = h
            numeric = (loss(store, f0 + e) - loss(store, f0 - e)) / (2 * h)
            assert numeric == pytest.approx(df[k], rel=1e-5, abs=1e-9)

    def test_zero_weights_accumulate_nothing(self):
        store = make_store()
        f, _ = encode([3], store)
        _, _, cache = decode_teacher_forced(f, [4, 5], store)
        store.zero_grad()
        df = decode_backward(store, cache, 0.0, None)
        assert store.grad_norm() == 0.0
        assert not df.any()

    def test_soft_gradient_shape_is_checked(self):
        store = make_store()
        f, _ = encode([3], store)
        _, _, cache = decode_teacher_forced(f, [4, 5], store)
        with pytest.raises(ShapeError):
            decode_backward(store, cache, 1.0, np.zeros((3, V)))


class TestGreedyGeneration:
    def test_stop_first_gives_empty_output(self):
        store = make_store()
        store.value("dec.out.W")[...] = 0.0
        store.value("dec.out.b")[STOP] = 10.0
        assert generate_greedy(encode([3], store)[0], store, 10) == []

    def test_runs_until_t_max(self):
        store = make_store()
        store.value("dec.out.W")[...] = 0.0
        store.value("dec.out.b")[7] = 10.0
        assert generate_greedy(encode([3], store)[0], store, 4) == [7, 7, 7, 7]

    def test_ties_go_to_the_lowest_id(self):
        store = make_store()
        store.value("dec.out.W")[...] = 0.0
        store.value("dec.out.b")[[6, 9]] = 10.0
        assert generate_greedy(encode([3], store)[0], store, 2) == [6, 6]

    def test_deterministic(self):
        store = make_store(seed=4)
        f, _ = encode([3, 8, 11], store)
        assert generate_greedy(f, store, 12) == generate_greedy(f, store, 12)

    def test_t_max_must_be_positive(self):
        store = make_store()
        with pytest.raises(ValueError):
            generate_greedy(np.zeros(D), store, 0)
