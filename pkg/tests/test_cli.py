import filecmp
import json
import os

import numpy as np
import pytest

from tsk.cli import EXIT_DATA, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, load_config, main
from tsk.evaluation import read_report_tsv, roc_auc
from tsk.kmm import load_beta
from tsk.seqdata import load_labeled_dataset
from tsk.stringkernel import KernelParams, gram_matrix, load_gram
from tsk.wsvm import SvmTrainConfig, predict_batch, train_weighted_svm

SYNTH = """\
[synthetic]
length = 30
n_train = 40
n_target_pos = 12
"""

RUN = """\
[data]
source_fasta = {d}/source_train.fa
source_labels = {d}/source_train.labels
validation_fasta = {d}/target_val.fa
validation_labels = {d}/target_val.labels
test_fasta = {d}/target_test.fa
test_labels = {d}/target_test.labels

[kernel]
k = {k}
m = 1

[svm]
C = {C}

[kmm]
enabled = {kmm}
"""


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    (root / "synth.ini").write_text(SYNTH)
    assert main(["synth", "--config", str(root / "synth.ini"), "--seed", "4",
                 "--out", str(root / "data")]) == EXIT_OK
    return root / "data"


def write_config(path, corpus, k="4", C="1", kmm="true", extra="", data_extra=""):
    # ``extra`` lands in [kmm], ``data_extra`` in [data]
    text = RUN.format(d=corpus, k=k, C=C, kmm=kmm).replace("\n[kernel]", data_extra + "\n[kernel]")
    path.write_text(text + extra)
    return str(path)


def tree(root):
    return sorted(os.path.relpath(os.path.join(d, f), root)
                  for d, _, files in os.walk(root) for f in files)


def same_tree(a, b):
    names = tree(a)
    assert names == tree(b)
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors


def test_run_tsk_writes_artifacts(tmp_path, corpus, capsys):
    cfg = write_config(tmp_path / "c.ini", corpus)
    assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "test AUC =" in capsys.readouterr().out
    for rel in ("kernels/gram.txt", "kernels/kappa.txt", "weights/beta.txt", "models/model.txt",
                "reports/target_scores.tsv", "reports/eval.tsv", "reports/eval.json",
                "manifest.json"):
        assert (tmp_path / "o" / rel).exists(), rel
    gram = load_gram(tmp_path / "o/kernels/gram.txt")
    assert gram.n == 40 and np.allclose(np.diag(gram.values), 1)
    assert len(load_beta(tmp_path / "o/weights/beta.txt")) == 40
    manifest = json.loads((tmp_path / "o/manifest.json").read_text())
    assert manifest["kmm_target"] == "test-file" and manifest["method"] == "TSK"


def test_runs_are_byte_identical(tmp_path, corpus):
    cfg = write_config(tmp_path / "c.ini", corpus)
    for name in ("a", "b"):
        assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / name)]) == EXIT_OK
    assert same_tree(tmp_path / "a", tmp_path / "b")


def test_jobs_do_not_change_artifacts(tmp_path, corpus):
    cfg = write_config(tmp_path / "c.ini", corpus)
    main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "3"])
    assert same_tree(tmp_path / "a", tmp_path / "b")


def test_kmm_off_equals_sk_baseline(tmp_path, corpus):
    off = write_config(tmp_path / "off.ini", corpus, kmm="false")
    on = write_config(tmp_path / "on.ini", corpus)
    assert main(["run-tsk", "--config", off, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run-sk", "--config", on, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert same_tree(tmp_path / "a", tmp_path / "b")
    beta = load_beta(tmp_path / "a/weights/beta.txt")
    assert (beta.values == 1).all()


def test_self_transfer_matches_sk(tmp_path, corpus):
    # source doubles as KMM target and test set
    text = RUN.format(d=corpus, k=4, C=1, kmm="true").replace("target_test", "source_train")
    (tmp_path / "c.ini").write_text(text)
    main(["run-tsk", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path / "a")])
    main(["run-sk", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path / "b")])
    beta = load_beta(tmp_path / "a/weights/beta.txt").values
    assert np.abs(beta - 1).max() <= 0.1
    auc = [json.loads((tmp_path / d / "reports/eval.json").read_text())["auc"] for d in "ab"]
    assert abs(auc[0] - auc[1]) <= 0.02


def test_missing_target_file(tmp_path, corpus, capsys):
    cfg = write_config(tmp_path / "c.ini", corpus, data_extra=f"target_fasta = {tmp_path}/nope.fa\n")
    assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert "nope.fa" in capsys.readouterr().err
    assert not (tmp_path / "o/models/model.txt").exists()


def test_bad_fasta_exits_with_data_code(tmp_path, corpus):
    bad = tmp_path / "bad"
    bad.mkdir()
    for f in os.listdir(corpus):
        (bad / f).write_bytes((corpus / f).read_bytes())
    (bad / "source_train.fa").write_text(">x\nACGN\n")
    cfg = write_config(tmp_path / "c.ini", bad)
    assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_usage_errors(tmp_path, corpus):
    cfg = write_config(tmp_path / "c.ini", corpus)
    assert main(["run-tsk", "--config", cfg]) == EXIT_USAGE
    assert main(["run-tsk", "--config", str(tmp_path / "absent.ini"), "--out", "x"]) == EXIT_USAGE
    (tmp_path / "o").mkdir()
    (tmp_path / "o" / "keep").write_text("")
    assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o"), "--force"]) == EXIT_OK
    with pytest.raises(SystemExit):
        main(["no-such-command"])


def test_kmm_nonconvergence_exits_solver_code(tmp_path, corpus):
    cfg = write_config(tmp_path / "c.ini", corpus, extra="max_iter = 1\ntol = 1e-300\n")
    assert main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_SOLVER


def test_grid_and_evaluate(tmp_path, corpus, capsys):
    cfg = write_config(tmp_path / "c.ini", corpus, k="3 4", C="0.1 1")
    assert main(["grid", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    lines = (tmp_path / "a/reports/grid.tsv").read_text().splitlines()
    assert len(lines) == 5
    assert main(["grid", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a/reports/grid.tsv").read_bytes() == (tmp_path / "b/reports/grid.tsv").read_bytes()
    assert main(["grid", "--config", cfg, "--out", str(tmp_path / "c"), "--evaluate"]) == EXIT_OK
    assert (tmp_path / "c/reports/eval.json").exists()
    assert "selected k=" in capsys.readouterr().out


def test_synth_ratio_and_zero_shift(tmp_path):
    (tmp_path / "s.ini").write_text(SYNTH)
    assert main(["synth", "--config", str(tmp_path / "s.ini"), "--ratio", "1:3",
                 "--zero-shift", "--out", str(tmp_path / "d")]) == EXIT_OK
    labels = (tmp_path / "d/target_test.labels").read_text().split()
    assert labels.count("-1") == 3 * labels.count("+1") == 36
    prof = json.loads((tmp_path / "d/profile.json").read_text())
    assert prof["source_mix"] == prof["target_mix"]
    assert not (tmp_path / "d/kernels").exists()
    (tmp_path / "bad.ini").write_text("[synthetic]\nlength = 4\n")
    assert main(["synth", "--config", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "e")]) == EXIT_DATA


def test_conserve(tmp_path, capsys):
    (tmp_path / "s.txt").write_text("1.0 3.0 -1.0 NA 0.0 NA\n")
    assert main(["conserve", str(tmp_path / "s.txt"), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "CS = 0.704133" in capsys.readouterr().out
    rec = json.loads((tmp_path / "o/reports/conservation.json").read_text())
    assert (rec["C_t"], rec["C_n"]) == (6, 2)
    (tmp_path / "z.txt").write_text("1.0 2.0 NA\n")
    assert main(["conserve", str(tmp_path / "z.txt")]) == EXIT_DATA


def test_inspect(tmp_path, corpus, capsys):
    cfg = write_config(tmp_path / "c.ini", corpus)
    main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")])
    capsys.readouterr()
    paths = [str(tmp_path / "o" / p) for p in
             ("kernels/gram.txt", "kernels/kappa.txt", "weights/beta.txt", "models/model.txt",
              "reports/eval.tsv", "manifest.json")]
    assert main(["inspect", *paths]) == EXIT_OK
    out = capsys.readouterr().out
    for key in ("Gram matrix", "kappa vector", "KMM weights", "SVM model", "AUC"):
        assert key in out


def test_config_parsing(tmp_path):
    (tmp_path / "c.ini").write_text("[data]\nsource_fasta = a.fa\nsource_labels = a.lab\n"
                                   "[kernel]\nk = 8, 10\nm = 1\n[svm]\nC = 0.1 1 10\n"
                                   "[kmm]\nB = 5\nepsilon = 0.2\n")
    cfg = load_config(str(tmp_path / "c.ini"))
    assert cfg.source == (str(tmp_path / "a.fa"), str(tmp_path / "a.lab"))
    assert cfg.k == (8, 10) and cfg.C == (0.1, 1.0, 10.0)
    assert cfg.kmm_config.B == 5 and cfg.kmm_config.epsilon == 0.2
    (tmp_path / "bad.ini").write_text("[data]\nsource_fasta = a.fa\n")
    with pytest.raises(ValueError, match="source_labels"):
        load_config(str(tmp_path / "bad.ini"))


def test_reported_auc_matches_score_file(tmp_path, corpus):
    cfg = write_config(tmp_path / "c.ini", corpus)
    main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")])
    _, scores, labels = read_report_tsv((tmp_path / "o/reports/target_scores.tsv").read_text())
    reported = json.loads((tmp_path / "o/reports/eval.json").read_text())["auc"]
    assert roc_auc(scores, labels) == pytest.approx(reported, abs=1e-6)


def test_kmm_off_matches_manual_composition(tmp_path, corpus):
    cfg = write_config(tmp_path / "c.ini", corpus, kmm="false")
    main(["run-tsk", "--config", cfg, "--out", str(tmp_path / "o")])
    train = load_labeled_dataset(corpus / "source_train.fa", corpus / "source_train.labels")
    test = load_labeled_dataset(corpus / "target_test.fa", corpus / "target_test.labels")
    p = KernelParams(4, 1)
    model = train_weighted_svm(gram_matrix(train.sequences, p), train.labels, np.ones(len(train)),
                               SvmTrainConfig(1.0), train.sequences)
    manual = [f"{i}\t{f:.6f}\t{y:+d}" for (i, f), y in
              zip(predict_batch(model, test.sequences), test.labels)]
    emitted = (tmp_path / "o/reports/target_scores.tsv").read_text().splitlines()[1:]
    assert emitted == manual


def test_conserve_symmetric_mass(tmp_path, capsys):
    (tmp_path / "s.txt").write_text("2.0 -2.0 NA\n")
    assert main(["conserve", str(tmp_path / "s.txt")]) == EXIT_OK
    # ln(2) - ln(2) - ln(1/3)/100
    assert "CS = 0.010986" in capsys.readouterr().out
