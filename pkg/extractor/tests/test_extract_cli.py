"""Command line behavior: outputs, summary line, error reporting, usage."""

import json

import pytest
from attnkit import interchange

from attnextract.cli import main


def last_json_line(capsys):
    lines = [line for line in capsys.readouterr().out.splitlines() if line]
    return json.loads(lines[-1])


class TestExtractCommand:
    def test_writes_loadable_container(self, bert_dir, input_file, tmp_path,
                                       capsys):
        out = tmp_path / "out.atnx"
        rc = main(["--model", bert_dir, "--input", str(input_file),
                   "--out-extract", str(out), "--max-length", "64"])
        assert rc == 0
        summary = last_json_line(capsys)
        assert summary["segments"] == 2
        assert summary["truncated"] == 0
        assert len(interchange.load_extract(out).segments) == 2

    def test_both_outputs_in_one_run(self, bert_dir, input_file, tmp_path,
                                     capsys):
        out = tmp_path / "out.atnx"
        grad = tmp_path / "grad.json"
        per_head = tmp_path / "per_head.json"
        rc = main(["--model", bert_dir, "--input", str(input_file),
                   "--out-extract", str(out), "--out-grad", str(grad),
                   "--per-head-grad", str(per_head), "--max-length", "64",
                   "--seed", "9"])
        assert rc == 0
        summary = last_json_line(capsys)
        assert summary["grad_segments"] == 2
        assert summary["masked_tokens"] >= 2
        interchange.load_extract(out)
        interchange.load_gradient_report(grad)
        assert json.loads(per_head.read_text())["n_heads"] == 2

    def test_error_reported_as_json(self, causal_dir, input_file, tmp_path,
                                    capsys):
        rc = main(["--model", causal_dir, "--input", str(input_file),
                   "--out-grad", str(tmp_path / "grad.json"),
                   "--max-length", "16"])
        assert rc == 1
        assert last_json_line(capsys)["error"] == "extract-error"

    def test_missing_input_file(self, bert_dir, tmp_path, capsys):
        rc = main(["--model", bert_dir, "--input", str(tmp_path / "nope.txt"),
                   "--out-extract", str(tmp_path / "out.atnx"),
                   "--max-length", "64"])
        assert rc == 1
        assert last_json_line(capsys)["error"] == "error"


class TestUsage:
    def test_requires_an_output(self, bert_dir, input_file):
        with pytest.raises(SystemExit) as exc:
            main(["--model", bert_dir, "--input", str(input_file)])
        assert exc.value.code == 2

    def test_per_head_requires_grad_output(self, bert_dir, input_file,
                                           tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["--model", bert_dir, "--input", str(input_file),
                  "--out-extract", str(tmp_path / "o.atnx"),
                  "--per-head-grad", str(tmp_path / "p.json")])
        assert exc.value.code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("attn-extract ")
