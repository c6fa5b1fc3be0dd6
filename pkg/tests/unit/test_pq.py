"""Test product quantization: training, coding and the float ADC scan."""

import numpy as np
import pytest

from nibblescan._types import LUTf, PQCodes, VectorSet
from nibblescan.errors import ArgumentError, CorruptionError
from nibblescan.kmeans import assign, kmeans
from nibblescan.params import KMeansParams
from nibblescan.pq import (
    Codebook,
    adc_distances,
    adc_scan,
    bits_per_code,
    build_lut,
    code_size_bytes,
    decode,
    deserialize_codes,
    encode,
    encode_batch,
    serialize_codes,
    train_pq,
)


def _random_codebook(rng, m=4, k=16, dsub=3):
    return Codebook(rng.standard_normal((m, k, dsub)).astype(np.float32))


class TestCodebook:
    def test_shape(self):
        cb = Codebook(np.zeros((4, 16, 3)))
        assert (cb.m, cb.k, cb.dsub, cb.d) == (4, 16, 3, 12)

    def test_rejects_bad_shape(self):
        with pytest.raises(ArgumentError):
            Codebook(np.zeros((4, 16)))

    def test_rejects_k_above_256(self):
        with pytest.raises(ArgumentError):
            Codebook(np.zeros((1, 257, 1)))


class TestTrainPQ:
    def test_m1_is_kmeans(self):
        rng = np.random.default_rng(0)
        data = VectorSet(rng.random((200, 4)))
        cb = train_pq(data, m=1, k=8, seed=5)
        assert np.array_equal(cb.centroids[0], kmeans(data, KMeansParams(k=8, seed=5)).data)

    def test_deep_style_shape(self):
        rng = np.random.default_rng(1)
        cb = train_pq(VectorSet(rng.random((64, 96))), m=16, k=16, seed=0, iters=2)
        assert cb.centroids.shape == (16, 16, 6)

    def test_slices_trained_independently(self):
        """Sub-codebook j equals k-means on slice j with seed ``seed + j``."""
        eye = np.eye(4, dtype=np.float32)
        data = VectorSet(np.tile(eye, (16, 1)))
        cb = train_pq(data, m=2, k=2, seed=10)
        for j in range(2):
            expected = kmeans(data.slice_dims(2 * j, 2 * j + 2), KMeansParams(k=2, seed=10 + j))
            assert np.array_equal(cb.centroids[j], expected.data)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        data = VectorSet(rng.random((100, 8)))
        assert train_pq(data, 4, 16, seed=3).equals(train_pq(data, 4, 16, seed=3))

    def test_indivisible_dimension(self):
        with pytest.raises(ArgumentError, match="divisible"):
            train_pq(VectorSet(np.zeros((20, 10))), m=3, k=2, seed=0)

    def test_too_few_points(self):
        with pytest.raises(ArgumentError):
            train_pq(VectorSet(np.zeros((10, 4))), m=2, k=16, seed=0)


class TestEncodeDecode:
    def test_encode_codeword_concatenation(self):
        rng = np.random.default_rng(3)
        cb = _random_codebook(rng, m=2)
        x = np.concatenate([cb.centroids[0, 5], cb.centroids[1, 2]])
        assert encode(cb, x).tolist() == [5, 2]

    def test_m1_matches_assign(self):
        rng = np.random.default_rng(4)
        cb = _random_codebook(rng, m=1, dsub=5)
        x = rng.standard_normal(5)
        assert encode(cb, x).tolist() == [assign(cb.sub_codebook(0), x)]

    def test_matches_per_slice_loop(self):
        rng = np.random.default_rng(5)
        cb = _random_codebook(rng)
        xs = rng.standard_normal((200, cb.d)).astype(np.float32)
        codes = encode_batch(cb, VectorSet(xs)).codes
        for x, row in zip(xs, codes):
            expected = []
            for j in range(cb.m):
                sub = x[j * cb.dsub : (j + 1) * cb.dsub].astype(np.float64)
                dist = ((cb.centroids[j].astype(np.float64) - sub) ** 2).sum(axis=1)
                expected.append(int(np.argmin(dist)))
            assert row.tolist() == expected

    def test_decode_round_trip_on_codewords(self):
        rng = np.random.default_rng(6)
        cb = _random_codebook(rng, m=2)
        x = np.concatenate([cb.centroids[0, 5], cb.centroids[1, 2]])
        decoded = decode(cb, PQCodes(encode(cb, x)[None, :]))
        assert np.array_equal(decoded.data[0], x)

    def test_zero_codebook_decodes_to_zero(self):
        cb = Codebook(np.zeros((3, 16, 2)))
        assert not decode(cb, PQCodes(np.array([[1, 7, 15]]))).data.any()

    def test_decode_elementwise(self):
        rng = np.random.default_rng(7)
        cb = _random_codebook(rng)
        codes = rng.integers(0, 16, size=(30, cb.m))
        decoded = decode(cb, PQCodes(codes)).data
        for n in range(30):
            for j in range(cb.m):
                block = decoded[n, j * cb.dsub : (j + 1) * cb.dsub]
                assert np.array_equal(block, cb.centroids[j, codes[n, j]])

    def test_encode_decode_idempotent(self):
        rng = np.random.default_rng(8)
        cb = _random_codebook(rng)
        codes = PQCodes(rng.integers(0, 16, size=(50, cb.m)))
        assert encode_batch(cb, decode(cb, codes)).equals(codes)

    def test_decode_out_of_range(self):
        cb = Codebook(np.zeros((2, 16, 2)))
        with pytest.raises(CorruptionError) as exc:
            decode(cb, PQCodes(np.array([[0, 3], [16, 0]])))
        assert exc.value.row == 1
        assert exc.value.column == 0

    def test_encode_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            encode(Codebook(np.zeros((2, 16, 2))), np.zeros(5))


class TestLUT:
    def test_zero_at_codeword(self):
        rng = np.random.default_rng(9)
        cb = _random_codebook(rng, m=2)
        q = np.concatenate([cb.centroids[0, 4], rng.standard_normal(cb.dsub)])
        assert build_lut(cb, q).values[0, 4] == 0.0

    def test_k256_table_size(self):
        cb = Codebook(np.zeros((1, 256, 4)))
        lut = build_lut(cb, np.ones(4))
        assert lut.values.shape == (1, 256)
        assert lut.values.size * 32 == 8192

    def test_matches_double_precision(self):
        rng = np.random.default_rng(10)
        cb = _random_codebook(rng)
        q = rng.standard_normal(cb.d)
        values = build_lut(cb, q).values
        for j in range(cb.m):
            sub = q[j * cb.dsub : (j + 1) * cb.dsub].astype(np.float32).astype(np.float64)
            exact = ((cb.centroids[j].astype(np.float64) - sub) ** 2).sum(axis=1)
            assert np.abs(values[j] - exact).max() <= 1e-4

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            build_lut(Codebook(np.zeros((2, 16, 2))), np.zeros(3))


class TestADCScan:
    def test_hand_evaluation(self):
        lut = LUTf(np.array([[1.0, 2.0], [3.0, 4.0]]))
        result = adc_scan(lut, PQCodes(np.array([[0, 1]])), topk=1)
        assert result.ids.tolist() == [0]
        assert result.distances.tolist() == [5.0]

    def test_decoded_query_ranked_first(self):
        rng = np.random.default_rng(11)
        cb = _random_codebook(rng)
        codes = PQCodes(rng.integers(0, 16, size=(100, cb.m)))
        q = decode(cb, codes).data[37]
        result = adc_scan(build_lut(cb, q), codes, topk=1)
        assert result.distances[0] == 0.0
        # Ids sharing the code tie at zero; the lowest one wins.
        same = np.flatnonzero((codes.codes == codes.codes[37]).all(axis=1))
        assert result.ids[0] == same[0]

    def test_equals_decode_then_exact_scan(self):
        rng = np.random.default_rng(12)
        cb = _random_codebook(rng, m=8, dsub=2)
        codes = PQCodes(rng.integers(0, 16, size=(1000, cb.m)))
        q = rng.standard_normal(cb.d).astype(np.float32)
        adc = adc_distances(build_lut(cb, q), codes)
        decoded = decode(cb, codes).data.astype(np.float64)
        exact = ((decoded - q.astype(np.float64)) ** 2).sum(axis=1)
        np.testing.assert_allclose(adc, exact, rtol=1e-4, atol=1e-6)
        ranked = adc_scan(build_lut(cb, q), codes, topk=1000)
        assert np.all(np.diff(ranked.distances) >= 0)

    def test_total_order(self):
        rng = np.random.default_rng(13)
        lut = LUTf(rng.integers(0, 4, size=(3, 16)).astype(np.float32))
        codes = PQCodes(rng.integers(0, 16, size=(200, 3)))
        result = adc_scan(lut, codes, topk=200)
        dist = adc_distances(lut, codes)
        pairs = list(zip(dist[result.ids].tolist(), result.ids.tolist()))
        assert pairs == sorted(pairs)

    def test_topk_clamps(self):
        lut = LUTf(np.ones((1, 16)))
        assert len(adc_scan(lut, PQCodes(np.zeros((3, 1))), topk=10)) == 3

    def test_topk_must_be_positive(self):
        with pytest.raises(ArgumentError):
            adc_scan(LUTf(np.ones((1, 16))), PQCodes(np.zeros((3, 1))), topk=0)


class TestCodeSize:
    @pytest.mark.parametrize("n, m, k", [(10, 8, 16), (7, 3, 16), (10, 8, 256), (0, 4, 16)])
    def test_size_matches_bit_accounting(self, n, m, k):
        expected = -(-n * bits_per_code(m, k) // 8)
        assert code_size_bytes(n, m, k) == expected
        rng = np.random.default_rng(n + m)
        codes = PQCodes(rng.integers(0, k, size=(n, m)))
        assert len(serialize_codes(codes, k)) == expected

    def test_serialize_round_trip(self):
        rng = np.random.default_rng(14)
        codes = PQCodes(rng.integers(0, 16, size=(9, 3)))
        buf = serialize_codes(codes, 16)
        assert deserialize_codes(buf, 9, 3, 16).equals(codes)

    def test_nibble_order(self):
        assert serialize_codes(PQCodes(np.array([[1, 2, 3]])), 16) == bytes([0x21, 0x03])

    def test_bits_per_code(self):
        assert bits_per_code(16, 16) == 64
        assert bits_per_code(8, 256) == 64
