from __future__ import annotations

import numpy as np
import pytest
import torch

from unirec.data import align_embeddings, five_core_filter, generate_corpus, leave_one_out_split
from unirec.model import QuantizerConfig, RecommenderSettings, TokenizerConfig
from unirec.nn import Adam, parameter_dict
from unirec.trainer import (TrainConfig, TrainingData, compute_losses, fit, initialize_model,
                            train_step)


@pytest.fixture(scope="module")
def small():
    corpus = generate_corpus(num_items=60, num_users=120, num_clusters=4, seq_len_mean=8, seed=0, dim=16)
    ds = five_core_filter(corpus.records)
    return align_embeddings(corpus, ds).rows, leave_one_out_split(ds)


QCFG = QuantizerConfig(codebook_size=8, latent_dim=8, hidden=(12,))
SETTINGS = RecommenderSettings(max_seq_len=12)


def build(small, mode="unified", id_dim=4, seed=0, batch_size=32):
    feats, split = small
    tc = TrainConfig(batch_size=batch_size, seed=seed, max_epochs=2)
    return initialize_model(feats, split, QCFG, TokenizerConfig(mode, id_dim), SETTINGS, tc), tc


def first_batch(small, tc):
    return TrainingData(small[1], SETTINGS.max_seq_len).batches(tc.seed, 1, tc.batch_size)[0]


def snapshot(model):
    return {k: v.clone() for k, v in parameter_dict(model).items()}


def test_every_parameter_group_moves_after_one_step(small):
    model, tc = build(small)
    before = snapshot(model)
    train_step(model, Adam(model.named_parameters(), lr=0.01), first_batch(small, tc))
    groups = model.parameter_groups()
    assert set(groups) == {"encoder", "decoder", "codebooks", "positional", "recommender", "id_table"}
    names = {id(p): n for n, p in model.named_parameters()}
    for group, params in groups.items():
        moved = any(not torch.equal(before[names[id(p)]], p.detach()) for p in params)
        assert moved, group


def test_id_only_leaves_semantic_parameters_untouched(small):
    model, tc = build(small, mode="id_only")
    before = snapshot(model)
    opt = Adam(model.named_parameters(), lr=0.01)
    for batch in TrainingData(small[1], SETTINGS.max_seq_len).batches(0, 1, 32):
        train_step(model, opt, batch)
    for name, value in parameter_dict(model).items():
        if name.startswith("rqvae."):
            assert torch.equal(before[name], value), name
    assert model.id_table.weight.shape[1] == QCFG.latent_dim


def test_semantic_only_has_no_id_table(small):
    model, _ = build(small, mode="semantic_only")
    assert model.id_table is None and "id_table" not in model.parameter_groups()
    assert model.hidden_dim == QCFG.latent_dim


def test_zero_learning_rate_changes_nothing(small):
    model, tc = build(small)
    before = snapshot(model)
    train_step(model, Adam(model.named_parameters(), lr=0.0), first_batch(small, tc))
    assert all(torch.equal(before[k], v) for k, v in parameter_dict(model).items())


def test_total_is_sum_of_terms(small):
    model, tc = build(small)
    terms = train_step(model, Adam(model.named_parameters(), lr=0.0), first_batch(small, tc))
    l_recom, l_rqvae, l_recon = compute_losses(model, first_batch(small, tc))
    assert terms.total == terms.recom + terms.rqvae + terms.recon
    assert (terms.recom, terms.rqvae, terms.recon) == (l_recom.item(), l_rqvae.item(), l_recon.item())


def test_zero_epochs_returns_initial_state(small):
    model, _ = build(small)
    before = snapshot(model)
    report = fit(model, small[1], TrainConfig(max_epochs=0), num_negatives=20)
    assert report.epochs == [] and report.best_epoch == 0 and report.initial_valid is not None
    assert all(torch.equal(before[k], v) for k, v in parameter_dict(model).items())
    assert report.lines().splitlines()[1].startswith("0 nan")


def test_training_is_bitwise_reproducible(small):
    def run():
        model, tc = build(small)
        fit(model, small[1], tc, num_negatives=20)
        return parameter_dict(model)

    a, b = run(), run()
    assert all(a[k].numpy().tobytes() == b[k].numpy().tobytes() for k in a)


def test_negatives_avoid_history_and_depend_on_epoch(small):
    data = TrainingData(small[1], SETTINGS.max_seq_len)
    n1, n2 = data.negatives(0, 1), data.negatives(0, 2)
    assert not np.array_equal(n1, n2) and np.array_equal(n1, data.negatives(0, 1))
    for u in range(data.num_users):
        picked = n1[u][data.valid[u]]
        assert not set(picked.tolist()) & set(data.histories[u].tolist())


def test_repeated_steps_on_one_batch_reduce_total_loss(small):
    model, tc = build(small)
    batch = first_batch(small, tc)
    opt = Adam(model.named_parameters(), lr=0.001)
    first = train_step(model, opt, batch).total
    for _ in range(199):
        last = train_step(model, opt, batch).total
    assert last < first


def test_unified_without_id_dimension_is_the_semantic_only_model(small):
    a, _ = build(small, mode="unified", id_dim=0)
    b, _ = build(small, mode="semantic_only")
    pa, pb = parameter_dict(a), parameter_dict(b)
    assert pa.keys() == pb.keys() and all(torch.equal(pa[k], pb[k]) for k in pa)
