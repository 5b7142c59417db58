"""Unit tests for word-to-subword alignment, no model required."""

import pytest

pytest.importorskip("ctxv_exporter")

from ctxv_exporter.alignment import AlignmentError, AlignmentMap, align_words


class TestAlignWords:
    def test_specials_excluded_and_spans_grouped(self):
        # [CLS] w0 w1 w1 w2 [SEP]
        amap = align_words([None, 0, 1, 1, 2, None], n_words=3)
        assert amap.spans == ((1,), (2, 3), (4,))
        assert amap.n_words == 3
        assert amap.token_count() == 4

    def test_single_word_owns_all_inner_tokens(self):
        amap = align_words([None, 0, 0, 0, None], n_words=1)
        assert amap.spans == ((1, 2, 3),)

    def test_no_special_tokens_at_all(self):
        amap = align_words([0, 1], n_words=2)
        assert amap.spans == ((0,), (1,))

    def test_word_without_tokens_rejected(self):
        with pytest.raises(AlignmentError, match="word 1 produced no subword"):
            align_words([None, 0, None], n_words=2)

    def test_sentence_id_carried_on_error(self):
        with pytest.raises(AlignmentError) as err:
            align_words([None, 0, None], n_words=2, sentence_id=7)
        assert err.value.sentence_id == 7

    def test_non_contiguous_word_rejected(self):
        # word 0 split around word 1
        with pytest.raises(AlignmentError, match="non-contiguous"):
            align_words([0, 1, 0], n_words=2)

    def test_out_of_order_words_rejected(self):
        with pytest.raises(AlignmentError, match="inside or before"):
            align_words([None, 1, 0, None], n_words=2)

    def test_word_id_out_of_range_rejected(self):
        with pytest.raises(AlignmentError, match="outside"):
            align_words([None, 0, 5, None], n_words=2)

    def test_empty_sentence_rejected(self):
        with pytest.raises(AlignmentError, match="no words"):
            align_words([None, None], n_words=0)

    def test_map_is_immutable(self):
        amap = align_words([0], n_words=1)
        assert isinstance(amap, AlignmentMap)
        with pytest.raises(AttributeError):
            amap.spans = ()
