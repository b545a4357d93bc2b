"""Evaluation plumbing: aux policies, pooled scoring, sweeps, exports."""

from __future__ import annotations

import csv
import dataclasses
import math

import numpy as np
import pytest

from tsasr.corpus import CorpusConfig, build_corpus, load_manifest
from tsasr.decode import greedy_decode
from tsasr.errors import ConfigError, ContractError
from tsasr.evaluate import (
    SUBSAMPLED_FRAME_SECONDS,
    AuxPolicy,
    Transcriber,
    select_aux_waveforms,
    snr_sweep,
    spearman_corr,
    target_selection_eval,
    ts_eval,
    write_alignment_csv,
    write_sweep_csv,
)
from tsasr.features import n_frames_for
from tsasr.net import ModelConfig, TsAsrModel

CORPUS_CFG = CorpusConfig(n_speakers=3, utterances_per_speaker=3, n_examples=4)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval_corpus")
    build_corpus(CORPUS_CFG, seed=31, out_dir=root)
    return load_manifest(root / "manifest.jsonl")


@pytest.fixture(scope="module")
def transcriber():
    return Transcriber(TsAsrModel(ModelConfig.desk(), seed=0))


def test_frame_seconds_constant():
    assert SUBSAMPLED_FRAME_SECONDS == 0.04


def test_aux_policy_validation():
    assert AuxPolicy().count == 1
    AuxPolicy(count=2, max_seconds=3.0)
    with pytest.raises(ConfigError):
        AuxPolicy(count=3)
    with pytest.raises(ConfigError):
        AuxPolicy(max_seconds=0.0)


def test_select_aux_count_and_errors(corpus, tmp_path):
    row = corpus[0]
    waves = select_aux_waveforms(row.auxiliary_paths, AuxPolicy(count=2), row.example_id)
    assert len(waves) == 2
    with pytest.raises(ContractError, match="2 auxiliaries requested"):
        select_aux_waveforms(row.auxiliary_paths[:1], AuxPolicy(count=2))
    with pytest.raises(FileNotFoundError):
        select_aux_waveforms([tmp_path / "gone.wav"], AuxPolicy())


def test_select_aux_duration_budget(corpus):
    row = corpus[0]
    full = select_aux_waveforms(row.auxiliary_paths, AuxPolicy(count=2))
    capped = select_aux_waveforms(row.auxiliary_paths, AuxPolicy(count=2, max_seconds=0.15))
    assert len(capped) == 1  # budget exhausted inside the first utterance
    assert len(capped[0]) == int(0.15 * 16000) < len(full[0])
    with pytest.raises(ContractError, match="budget"):
        # under one 400-sample analysis window of usable audio
        select_aux_waveforms(row.auxiliary_paths, AuxPolicy(max_seconds=0.02))


def test_transcriber_probe_and_embed(corpus, transcriber):
    row = corpus[0]
    mixture = select_aux_waveforms([row.mixture_path], AuxPolicy())[0]
    aux = select_aux_waveforms(row.auxiliary_paths, AuxPolicy(count=2))

    probe: dict = {}
    transcriber.transcribe(mixture, aux[:1], probe=probe)
    assert probe["aux_frames"] == n_frames_for(len(aux[0]))
    assert probe["embedding"].shape == (32,)
    np.testing.assert_array_equal(probe["embedding"], transcriber.embed(aux[:1]))

    both: dict = {}
    transcriber.transcribe(mixture, aux, probe=both)
    assert both["aux_frames"] == sum(n_frames_for(len(a)) for a in aux)
    assert not np.array_equal(both["embedding"], probe["embedding"])


def test_ts_eval_pools_counts(corpus, transcriber):
    report = ts_eval(corpus, transcriber)
    assert len(report.per_example) == len(corpus)
    c = report.corpus
    assert c.substitutions == sum(r.report.substitutions for r in report.per_example)
    assert c.n_ref_words == sum(r.report.n_ref_words for r in report.per_example)
    assert report.ts_wer_percent == 100.0 * c.n_errors / c.n_ref_words
    d = report.to_dict()
    assert {"wer", "S", "I", "D", "n_words", "per_example"} <= set(d)
    assert len(d["per_example"]) == len(corpus)


def test_ts_eval_multi_target_scores_every_component(corpus, transcriber):
    report = ts_eval(corpus, transcriber, multi_target=True)
    expected = sum(1 + len(row.interferers) for row in corpus)
    assert len(report.per_example) == expected


def test_ts_eval_only_speaker_filters(corpus, transcriber):
    spk = corpus[0].target_speaker
    hits = sum(
        1
        for row in corpus
        if spk == row.target_speaker or spk in {i.speaker for i in row.interferers}
    )
    report = ts_eval(corpus, transcriber, only_speaker=spk)
    assert len(report.per_example) == hits
    assert all(r.speaker == spk for r in report.per_example)


def test_target_selection_records(corpus, transcriber):
    records = target_selection_eval(corpus, transcriber)
    assert len(records) == len(corpus)
    for rec in records:
        for tag in ("target_aux", "interferer_aux"):
            assert set(rec[tag]) == {"hyp", "wer_vs_target", "wer_vs_interferer"}
    bare = dataclasses.replace(corpus[0], interferers=())
    with pytest.raises(ContractError, match="interferer"):
        target_selection_eval([bare], transcriber)


def test_snr_sweep_layout_and_determinism(transcriber, tmp_path):
    base = CorpusConfig(n_speakers=3, utterances_per_speaker=3, n_examples=2)
    curve = snr_sweep(base, build_seed=5, transcriber=transcriber,
                      snr_list=[0.0, 5.0], workdir=tmp_path)
    assert [p["snr_db"] for p in curve] == [0.0, 5.0]
    assert (tmp_path / "snr_+0p0" / "manifest.jsonl").exists()
    assert (tmp_path / "snr_+5p0" / "manifest.jsonl").exists()

    again = snr_sweep(base, build_seed=5, transcriber=transcriber,
                      snr_list=[0.0], workdir=tmp_path)
    assert again[0]["ts_wer"] == curve[0]["ts_wer"]


def test_write_sweep_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_sweep_csv([{"snr_db": -5.0, "ts_wer": 80.0}, {"snr_db": 10.0, "ts_wer": 12.5}], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["snr_db", "ts_wer"]
    assert rows[1:] == [["-5.0", "80.0"], ["10.0", "12.5"]]


def test_write_alignment_csv(tmp_path):
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(3, 17))
    lp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    hyp = greedy_decode(lp)
    path = tmp_path / "align.csv"
    write_alignment_csv(hyp, path)

    rows = list(csv.reader(path.open()))
    assert rows[0] == ["frame", "time_sec", "token", "probability"]
    body = rows[1:]
    assert len(body) == 3 * 16  # every frame x every non-blank token
    assert body[0][:3] == ["0", "0.0", "a"]
    assert body[-1][0] == "2" and float(body[-1][1]) == pytest.approx(2 * 0.04)
    for r in body:
        frame, _, token, prob = r
        k = ord(token) - ord("a") + 1
        assert float(prob) == pytest.approx(np.exp(lp[int(frame), k]), rel=1e-6)


def test_spearman_corr():
    assert spearman_corr([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman_corr([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman_corr([1.0, 1.0, 2.0], [1, 2, 3]) == pytest.approx(math.sqrt(3) / 2)
    assert spearman_corr([5, 5, 5], [1, 2, 3]) == 0.0
    with pytest.raises(ContractError):
        spearman_corr([1], [1])
    with pytest.raises(ContractError):
        spearman_corr([1, 2], [1, 2, 3])
