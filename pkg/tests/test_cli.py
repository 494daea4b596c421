import json
from pathlib import Path

import pytest

from pairdisc import cli
from pairdisc.config import SEED_ENV
from pairdisc.pipeline import Pipeline
from pairdisc.registry import command_registry
from pairdisc.sentiment import load_probe
from pairdisc.testing import toy_rows, write_config, write_pairs_tsv, write_phrases_tsv
from pairdisc.text import load_split, write_split
from pairdisc.trainer import METRICS_NAME, MANIFEST_NAME, checkpoint_name


TINY_CONFIG = {
	"variant": "EDD-LG-shared",
	"embed_dim": 8,
	"hidden_dim": 8,
	"t_max": 12,
	"batch_size": 3,
	"epochs": 1,
	"seed": 0,
}


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch: pytest.MonkeyPatch):
	monkeypatch.delenv(SEED_ENV, raising=False)


@pytest.fixture
def trained(tmp_path: Path, capsys: pytest.CaptureFixture):
	config = write_config(tmp_path / "train.cfg", TINY_CONFIG)
	data = write_pairs_tsv(tmp_path / "train.tsv", toy_rows(12))
	run = tmp_path / "run"
	rc = cli.main(["train", "--config", str(config), "--data", str(data), "--out", str(run)])
	assert rc == 0
	out = capsys.readouterr().out.strip().splitlines()
	return Path(out[-1]), data


def test_every_command_has_registered_steps():
	commands = set(command_registry.get_commands())
	assert {"train", "generate", "eval", "sentiment-train", "sentiment-eval", "gradcheck", "compare", "split"} <= commands
	assert command_registry.get_steps_for_command("train") == [
		"load_config", "load_training_data", "record_manifest", "run_training",
	]


def test_sentiment_subcommands_are_mapped():
	command = Pipeline().parse_command_line(["sentiment", "eval", "--probe", "p", "--data", "d"])
	assert command.command == "sentiment-eval"


def test_unknown_flag_is_a_usage_error(capsys: pytest.CaptureFixture):
	assert cli.main(["gradcheck", "--bogus"]) == 1
	assert "error" in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
	assert cli.main([]) == 1


def test_gradcheck_passes_on_the_default_tiny_model(capsys: pytest.CaptureFixture):
	assert cli.main(["gradcheck"]) == 0
	out = capsys.readouterr().out
	assert "max relative error" in out
	assert "PASS at tolerance 0.0001" in out


def test_gradcheck_failure_exits_with_divergence_status(capsys: pytest.CaptureFixture):
	assert cli.main(["gradcheck", "--samples", "20", "--tolerance", "0"]) == 3
	assert "FAIL" in capsys.readouterr().out


def test_train_writes_a_run_directory(trained):
	ckpt, _ = trained
	run = ckpt.parent
	assert ckpt.name == checkpoint_name(1)
	assert (run / checkpoint_name(0)).is_file()
	assert (run / METRICS_NAME).is_file()
	assert '"finished_at": null' not in (run / MANIFEST_NAME).read_text(encoding="utf-8")


def test_train_with_missing_config_exits_1(tmp_path: Path, capsys: pytest.CaptureFixture):
	data = write_pairs_tsv(tmp_path / "train.tsv", toy_rows(3))
	rc = cli.main(["train", "--config", str(tmp_path / "nope.cfg"), "--data", str(data), "--out", str(tmp_path)])
	assert rc == 1
	assert capsys.readouterr().err.startswith("error: ")


def test_train_with_missing_data_exits_2(tmp_path: Path):
	config = write_config(tmp_path / "train.cfg", TINY_CONFIG)
	rc = cli.main(["train", "--config", str(config), "--data", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "r")])
	assert rc == 2


def test_train_on_a_split_subset(tmp_path: Path):
	config = write_config(tmp_path / "train.cfg", TINY_CONFIG)
	data = write_pairs_tsv(tmp_path / "train.tsv", toy_rows(9))
	split = tmp_path / "train.split"
	write_split(split, [0, 2, 4, 6, 8, 1])
	run = tmp_path / "run"
	assert cli.main(["train", "--config", str(config), "--data", str(data), "--out", str(run), "--split", str(split)]) == 0
	assert (run / checkpoint_name(1)).is_file()


def test_split_index_out_of_range_exits_2(tmp_path: Path, capsys: pytest.CaptureFixture):
	config = write_config(tmp_path / "train.cfg", TINY_CONFIG)
	data = write_pairs_tsv(tmp_path / "train.tsv", toy_rows(3))
	split = tmp_path / "train.split"
	write_split(split, [0, 1, 99])
	rc = cli.main(["train", "--config", str(config), "--data", str(data), "--out", str(tmp_path / "r"), "--split", str(split)])
	assert rc == 2
	assert "out of range" in capsys.readouterr().err


def test_resume_with_changed_data_exits_2(tmp_path: Path, trained):
	ckpt, data = trained
	write_pairs_tsv(data, toy_rows(13))
	config = write_config(tmp_path / "more.cfg", {**TINY_CONFIG, "epochs": 2})
	rc = cli.main(["train", "--config", str(config), "--data", str(data), "--out", str(ckpt.parent),
				   "--resume", str(ckpt)])
	assert rc == 2


def test_generate_writes_one_line_per_input(tmp_path: Path, trained, capsys: pytest.CaptureFixture):
	ckpt, _ = trained
	inputs = tmp_path / "in.txt"
	inputs.write_text("how do i learn chess ?\n\nhow can i get better at yoga ?\n", encoding="utf-8")
	out = tmp_path / "out" / "gen.txt"
	assert cli.main(["generate", "--ckpt", str(ckpt), "--in", str(inputs), "--out", str(out)]) == 0
	lines = out.read_text(encoding="utf-8").split("\n")
	assert len(lines) == 4 and lines[1] == "" and lines[3] == ""


def test_eval_prints_a_metric_row(tmp_path: Path, trained, capsys: pytest.CaptureFixture):
	ckpt, data = trained
	assert cli.main(["eval", "--ckpt", str(ckpt), "--test", str(data), "--out", str(tmp_path / "hyp.txt")]) == 0
	lines = capsys.readouterr().out.strip().splitlines()
	header, row = lines[:2]
	details = json.loads("\n".join(lines[2:]))
	assert details["smoothing"] is False
	assert details["rouge_order"] == 2
	assert details["meteor_variant"] == "exact+stem, no synonyms"
	assert details["sentences"] == 12
	assert details["source_oov_rate"] == 0.0
	assert header.split("\t") == ["bleu1", "bleu2", "bleu3", "bleu4", "rouge_n", "meteor", "ter"]
	assert len(row.split("\t")) == 7
	assert len((tmp_path / "hyp.txt").read_text(encoding="utf-8").splitlines()) == 12


def test_eval_of_files(tmp_path: Path, capsys: pytest.CaptureFixture):
	hyp = tmp_path / "hyp.txt"
	ref = tmp_path / "ref.txt"
	hyp.write_text("how do i learn python ?\nb a\n", encoding="utf-8")
	ref.write_text("how do i learn python ?\na b\n", encoding="utf-8")
	assert cli.main(["eval", "--hyp", str(hyp), "--ref", str(ref), "--smoothing"]) == 0
	lines = capsys.readouterr().out.strip().splitlines()
	row = lines[1]
	details = json.loads("\n".join(lines[2:]))
	assert details["smoothing"] is True
	assert details["source_oov_rate"] is None
	assert row.split("\t")[-1] == f"{1 / 8:.6f}"


def test_eval_line_count_mismatch_exits_2(tmp_path: Path, capsys: pytest.CaptureFixture):
	hyp = tmp_path / "hyp.txt"
	ref = tmp_path / "ref.txt"
	hyp.write_text("a\nb\n", encoding="utf-8")
	ref.write_text("a\n", encoding="utf-8")
	assert cli.main(["eval", "--hyp", str(hyp), "--ref", str(ref)]) == 2
	err = capsys.readouterr().err
	assert "hyp.txt" in err and "ref.txt" in err


def test_eval_needs_a_source_of_hypotheses():
	assert cli.main(["eval", "--hyp", "only.txt"]) == 1
	assert cli.main(["eval"]) == 1


def test_sentiment_train_and_eval(tmp_path: Path, trained, capsys: pytest.CaptureFixture):
	ckpt, _ = trained
	phrases = write_phrases_tsv(tmp_path / "phrases.tsv", [
		("how do i learn python ?", 0), ("what is the best way to learn chess ?", 1),
		("how can i get better at yoga ?", 2), ("how do i improve my french ?", 3),
		("how do i learn piano ?", 4), ("how do i learn guitar ?", 4),
	])
	probe = tmp_path / "probe.bin"
	rc = cli.main(["sentiment", "train", "--ckpt", str(ckpt), "--data", str(phrases), "--out", str(probe),
				   "--epochs", "3"])
	assert rc == 0
	train_out = capsys.readouterr().out.splitlines()
	assert train_out[0].startswith("error_rate\t")
	assert train_out[1].startswith("very negative\t")
	_, meta = load_probe(probe)
	assert meta["encoder_checkpoint"] == str(ckpt)

	assert cli.main(["sentiment", "eval", "--probe", str(probe), "--data", str(phrases)]) == 0
	assert capsys.readouterr().out.splitlines() == train_out


def test_sentiment_train_reports_the_held_out_loss(tmp_path: Path, trained, capsys: pytest.CaptureFixture):
	ckpt, _ = trained
	phrases = write_phrases_tsv(tmp_path / "phrases.tsv", [("how do i learn python ?", 0), ("yoga", 1)])
	held_out = write_phrases_tsv(tmp_path / "held_out.tsv", [("how do i learn guitar ?", 0)])
	rc = cli.main(["sentiment", "train", "--ckpt", str(ckpt), "--data", str(phrases), "--out",
				   str(tmp_path / "probe.bin"), "--epochs", "2", "--val", str(held_out)])
	assert rc == 0
	out = capsys.readouterr().out.splitlines()
	assert out[-2].startswith("val_loss\t")
	assert float(out[-2].split("\t")[1]) > 0.0
	assert out[-1] in ("val_error_rate\t0.000000", "val_error_rate\t1.000000")


def test_sentiment_eval_rejects_another_encoder(tmp_path: Path, trained):
	ckpt, _ = trained
	phrases = write_phrases_tsv(tmp_path / "phrases.tsv", [("how do i learn python ?", 0), ("yoga", 1)])
	probe = tmp_path / "probe.bin"
	assert cli.main(["sentiment", "train", "--ckpt", str(ckpt), "--data", str(phrases), "--out", str(probe),
					 "--epochs", "1"]) == 0
	initial = ckpt.parent / checkpoint_name(0)
	rc = cli.main(["sentiment", "eval", "--probe", str(probe), "--data", str(phrases), "--ckpt", str(initial)])
	assert rc == 2


def test_compare_prints_ranks_and_critical_difference(tmp_path: Path, capsys: pytest.CaptureFixture):
	scores = tmp_path / "scores.tsv"
	scores.write_text("ED-L\tEDD-G\tEDD-LG\n0.20\t0.25\t0.30\n0.18\t0.22\t0.27\n0.21\t0.24\t0.26\n",
					  encoding="utf-8")
	assert cli.main(["compare", "--scores", str(scores)]) == 0
	out = capsys.readouterr().out.splitlines()
	assert out[:4] == ["method\tavg_rank", "EDD-LG\t1.0000", "EDD-G\t2.0000", "ED-L\t3.0000"]
	assert out[4].startswith("critical_difference\t")
	assert out[-1].startswith("EDD-G vs EDD-LG\t1.0000")


def test_compare_rejects_ragged_rows(tmp_path: Path):
	scores = tmp_path / "scores.tsv"
	scores.write_text("a\tb\n0.1\n", encoding="utf-8")
	assert cli.main(["compare", "--scores", str(scores)]) == 2


def test_split_writes_disjoint_index_files(tmp_path: Path, capsys: pytest.CaptureFixture):
	data = write_pairs_tsv(tmp_path / "pairs.tsv", toy_rows(10))
	out = tmp_path / "splits"
	rc = cli.main(["split", "--data", str(data), "--sizes", "6,3", "--names", "train,test", "--seed", "2",
				   "--out", str(out)])
	assert rc == 0
	train_idx, test_idx = load_split(out / "train.idx"), load_split(out / "test.idx")
	assert len(train_idx) == 6 and len(test_idx) == 3
	assert not set(train_idx) & set(test_idx)
	assert all(0 <= i < 10 for i in train_idx + test_idx)
	assert len(capsys.readouterr().out.strip().splitlines()) == 2

	config = write_config(tmp_path / "train.cfg", TINY_CONFIG)
	rc = cli.main(["train", "--config", str(config), "--data", str(data), "--out", str(tmp_path / "run"),
				   "--split", str(out / "train.idx")])
	assert rc == 0


def test_split_is_seeded(tmp_path: Path):
	data = write_pairs_tsv(tmp_path / "pairs.tsv", toy_rows(10))
	for name in ("a", "b"):
		assert cli.main(["split", "--data", str(data), "--sizes", "4", "--seed", "5", "--out", str(tmp_path / name)]) == 0
	assert (tmp_path / "a" / "split0.idx").read_text() == (tmp_path / "b" / "split0.idx").read_text()


@pytest.mark.parametrize("extra, code", [
	(["--sizes", "8,8"], 2),
	(["--sizes", "3,x"], 1),
	(["--sizes", "3,3", "--names", "train"], 1),
])
def test_split_rejects_bad_requests(tmp_path: Path, extra, code):
	data = write_pairs_tsv(tmp_path / "pairs.tsv", toy_rows(10))
	assert cli.main(["split", "--data", str(data), "--out", str(tmp_path / "s")] + extra) == code


def test_too_little_data_for_one_batch_exits_2(tmp_path: Path, capsys: pytest.CaptureFixture):
	config = write_config(tmp_path / "train.cfg", TINY_CONFIG)
	data = write_pairs_tsv(tmp_path / "train.tsv", toy_rows(2))
	rc = cli.main(["train", "--config", str(config), "--data", str(data), "--out", str(tmp_path / "run")])
	assert rc == 2
	assert "fill a batch" in capsys.readouterr().err
