"""Command-line surface: artifacts, manifests, determinism, exit codes."""

import json
from pathlib import Path

import pytest

from cckg.cli import main
from cckg.evalkit import applicable_criteria, load_batch
from cckg.kb import load_kb, save_kb
from cckg.pathing import PathRecord, save_paths

from helpers import kb_from_edges, make_assertion

FIXTURES = Path(__file__).parent / "fixtures"


def _build(out: Path) -> int:
    return main(
        ["build", "--config", str(FIXTURES / "pipeline" / "config.json"), "--out", str(out)]
    )


class TestBuild:
    def test_produces_artifacts_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        assert _build(out) == 0
        for name in ("kb.jsonl", "paths.jsonl", "report.txt", "manifest.json"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "build"
        assert manifest["seed"] == 7
        assert manifest["backend"].startswith("scripted:")
        assert str(out / "kb.jsonl") in manifest["outputs"]

    def test_byte_identical_across_runs(self, tmp_path):
        one, two = tmp_path / "one", tmp_path / "two"
        assert _build(one) == 0
        assert _build(two) == 0
        assert (one / "kb.jsonl").read_bytes() == (two / "kb.jsonl").read_bytes()
        assert (one / "paths.jsonl").read_bytes() == (two / "paths.jsonl").read_bytes()

    def test_report_shows_three_expansion_iterations(self, tmp_path):
        out = tmp_path / "run"
        _build(out)
        report = (out / "report.txt").read_text(encoding="utf-8")
        rows = [line.split() for line in report.splitlines()[2:-1]]
        assert [r[0] for r in rows] == ["0", "1", "2", "3"]

    def test_missing_taxonomy_exits_config(self, tmp_path, capsys):
        config = {
            "country": "X", "language": "English",
            "taxonomy": "missing_taxonomy.json",
            "backend": "mock", "fixtures": "also_missing.jsonl",
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config), encoding="utf-8")
        code = main(["build", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "missing_taxonomy.json" in capsys.readouterr().err

    def test_flag_overrides_config(self, tmp_path):
        out = tmp_path / "shallow"
        code = main(
            [
                "build",
                "--config", str(FIXTURES / "pipeline" / "config.json"),
                "--out", str(out), "--depth", "0",
            ]
        )
        assert code == 0
        kb = load_kb(out / "kb.jsonl")
        assert len(kb) == 7  # initial stage only


class TestPathsAndStats:
    @pytest.fixture()
    def built(self, tmp_path):
        out = tmp_path / "run"
        _build(out)
        return out

    def test_paths_command(self, built, tmp_path):
        out = tmp_path / "paths_out"
        code = main(["paths", "--kb", str(built / "kb.jsonl"), "--out", str(out)])
        assert code == 0
        assert (out / "paths.jsonl").read_bytes() == (built / "paths.jsonl").read_bytes()
        assert (out / "manifest.json").exists()

    def test_stats_hand_counted_fixture(self, tmp_path, capsys):
        ab = make_assertion("a", "xNext", "b")
        bc = make_assertion("b", "xNext", "c")
        ac = make_assertion("a", "xNext", "c")
        kb_file = tmp_path / "kb.jsonl"
        save_kb(kb_from_edges([ab, bc, ac]), kb_file)
        paths_file = tmp_path / "paths.jsonl"
        save_paths(
            [
                PathRecord.from_assertions("Breakfast", [ab, bc]),
                PathRecord.from_assertions("Breakfast", [ac]),
            ],
            paths_file,
        )
        capsys.readouterr()
        code = main(["stats", "--kb", str(kb_file), "--paths", str(paths_file)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        # maximal paths of this fixture: a->b->c and a->c (hand count)
        assert payload == {
            "unique_nodes": 3,
            "total_assertions": 3,
            "unique_paths": 2,
            "avg_path_length": 1.5,
            "eval_assertions": 0,
        }

    def test_stats_writes_manifest_with_out(self, built, tmp_path):
        out = tmp_path / "stats_out"
        code = main(
            ["stats", "--kb", str(built / "kb.jsonl"),
             "--paths", str(built / "paths.jsonl"), "--out", str(out)]
        )
        assert code == 0
        assert (out / "stats.json").exists()
        assert (out / "manifest.json").exists()

    def test_malformed_kb_exits_format(self, tmp_path, capsys):
        bad = tmp_path / "kb.jsonl"
        bad.write_text("definitely not json\n", encoding="utf-8")
        assert main(["stats", "--kb", str(bad)]) == 3


class TestIndexAndRetrieve:
    @pytest.fixture()
    def built(self, tmp_path):
        out = tmp_path / "run"
        _build(out)
        return out

    def test_index_and_retrieve_ranked_lines(self, built, tmp_path, capsys):
        index_out = tmp_path / "index_out"
        code = main(
            ["index", "--kb", str(built / "kb.jsonl"), "--kind", "assertions",
             "--out", str(index_out)]
        )
        assert code == 0
        capsys.readouterr()
        code = main(
            ["retrieve", "--index", str(index_out / "index.json"),
             "--query", "fresh ingredients from the market", "--k", "3"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        first = lines[0].split("\t")
        assert len(first) == 3
        scores = [float(line.split("\t")[1]) for line in lines]
        assert scores == sorted(scores, reverse=True)

    def test_paths_index(self, built, tmp_path):
        index_out = tmp_path / "pindex"
        code = main(
            ["index", "--kb", str(built / "kb.jsonl"), "--paths",
             str(built / "paths.jsonl"), "--kind", "paths", "--out", str(index_out)]
        )
        assert code == 0
        payload = json.loads((index_out / "index.json").read_text(encoding="utf-8"))
        assert all(item["kind"] == "path" for item in payload["items"])


class TestBench:
    def test_mcqa_summary(self, tmp_path, capsys):
        out = tmp_path / "bench_out"
        code = main(
            ["bench", "--task", "mcqa", "--data", str(FIXTURES / "bench" / "mcqa.jsonl"),
             "--backend", "mock", "--fixtures", str(FIXTURES / "bench" / "responses.jsonl"),
             "--out", str(out)]
        )
        assert code == 0
        assert "accuracy=0.7500" in capsys.readouterr().out
        assert (out / "mcqa_records.jsonl").exists()
        assert (out / "manifest.json").exists()

    def test_completion_summary(self, tmp_path, capsys):
        out = tmp_path / "bench_out"
        code = main(
            ["bench", "--task", "completion",
             "--data", str(FIXTURES / "bench" / "completion.jsonl"),
             "--backend", "mock", "--fixtures", str(FIXTURES / "bench" / "responses.jsonl"),
             "--out", str(out)]
        )
        assert code == 0
        assert "mean_similarity=0.9000" in capsys.readouterr().out
        assert (out / "completion_pairs.jsonl").exists()

    def test_judge_missing_fixture_exits_backend(self, tmp_path):
        stories = tmp_path / "stories.jsonl"
        stories.write_text(
            json.dumps({"subtopic": "Breakfast", "text": "a story"}) + "\n", encoding="utf-8"
        )
        out = tmp_path / "judge_out"
        code = main(
            ["bench", "--task", "judge", "--data", str(stories), "--country", "Indonesia",
             "--backend", "mock", "--fixtures", str(FIXTURES / "bench" / "responses.jsonl"),
             "--out", str(out)]
        )
        assert code == 4


class TestSampleAndScore:
    def _sample(self, tmp_path) -> Path:
        built = tmp_path / "run"
        _build(built)
        out = tmp_path / "sample_out"
        code = main(
            ["sample", "--kb", str(built / "kb.jsonl"), "--paths", str(built / "paths.jsonl"),
             "--gold", str(FIXTURES / "eval" / "gold_pool.jsonl"),
             "--n", "2", "--seed", "13", "--out", str(out)]
        )
        assert code == 0
        return out

    def _fill(self, batch_file: Path, key_file: Path, dest: Path, *, flip_golds=0) -> None:
        batch = load_batch(batch_file, key_file)
        lines = ["\t".join(["unit_id", "kind", "text", "CR", "COR", "LPC"])]
        flipped = 0
        for unit in batch.units:
            cells = []
            for name in ("CR", "COR", "LPC"):
                criterion = next(
                    (c for c in applicable_criteria(unit.kind) if c.value == name), None
                )
                if criterion is None:
                    cells.append("-")
                elif unit.is_gold:
                    value = unit.expected[criterion]
                    if flipped < flip_golds:
                        value = not value
                    cells.append("yes" if value else "no")
                else:
                    cells.append("yes")
            if unit.is_gold and flipped < flip_golds:
                flipped += 1
            lines.append("\t".join([unit.unit_id, unit.kind, "text"] + cells))
        dest.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_sample_is_seed_deterministic(self, tmp_path):
        out1 = self._sample(tmp_path)
        out2_dir = tmp_path / "sample_again"
        built = tmp_path / "run"
        code = main(
            ["sample", "--kb", str(built / "kb.jsonl"), "--paths", str(built / "paths.jsonl"),
             "--gold", str(FIXTURES / "eval" / "gold_pool.jsonl"),
             "--n", "2", "--seed", "13", "--out", str(out2_dir)]
        )
        assert code == 0
        assert (out1 / "batch.tsv").read_bytes() == (out2_dir / "batch.tsv").read_bytes()

    def test_score_prints_percentages_and_pearson(self, tmp_path, capsys):
        out = self._sample(tmp_path)
        sheet1 = tmp_path / "ann1.tsv"
        sheet2 = tmp_path / "ann2.tsv"
        self._fill(out / "batch.tsv", out / "keyfile.json", sheet1)
        self._fill(out / "batch.tsv", out / "keyfile.json", sheet2, flip_golds=1)
        capsys.readouterr()
        code = main(
            ["score", "--batch", str(out / "batch.tsv"), "--key", str(out / "keyfile.json"),
             "--sheets", str(sheet1), str(sheet2)]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "annotator ann1: gold 5/5 -> pass" in printed
        assert "annotator ann2: gold 4/5 -> pass" in printed
        assert "COR: mean 100.0%" in printed
        assert "pearson" in printed

    def test_score_rejects_failing_only_sheets(self, tmp_path, capsys):
        out = self._sample(tmp_path)
        sheet = tmp_path / "bad.tsv"
        self._fill(out / "batch.tsv", out / "keyfile.json", sheet, flip_golds=3)
        code = main(
            ["score", "--batch", str(out / "batch.tsv"), "--key", str(out / "keyfile.json"),
             "--sheets", str(sheet)]
        )
        assert code == 3
