import json
import subprocess
import sys

import pytest

from oddcover.cli import main
from oddcover.congruence import Congruence, CoveringSystem, dump_system, load_system


@pytest.fixture
def write(tmp_path):
    def _write(name, congruences, k=None, t=None):
        path = tmp_path / name
        dump_system(CoveringSystem([Congruence(r, m) for r, m in congruences], k, t), str(path))
        return str(path)

    return _write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_covers_and_witness(capsys, write):
    good = write("good.json", [(0, 3), (1, 3), (2, 3)], 3, 3)
    assert run(capsys, "verify", good)[0] == 0
    bad = write("bad.json", [(0, 3)])
    code, out, _ = run(capsys, "verify", bad, "--witness")
    assert code == 1
    report = json.loads(out)
    assert report["verdict"] == "Uncovered" and report["witness"] == "1 mod 3"


def test_verify_bruteforce_over_threshold(capsys, write):
    f = write("big.json", [(0, 101), (0, 103)])
    code, _, err = run(capsys, "verify", f, "--mode", "bruteforce", "--bf-threshold", "1000")
    assert code == 2 and "LcmOverflow" in err
    assert run(capsys, "--bf-threshold", "100000", "verify", f, "--mode", "bruteforce")[0] == 1


def test_threshold_from_environment(capsys, write, monkeypatch):
    f = write("big.json", [(0, 101), (0, 103)])
    monkeypatch.setenv("ODDCOVER_BF_THRESHOLD", "50")
    assert run(capsys, "verify", f, "--mode", "bruteforce")[0] == 2


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "verify", str(tmp_path / "missing.json"))[0] == 2
    assert run(capsys, "--help")[0] == 0


def test_audit(capsys, write):
    f = write("a.json", [(0, 3), (1, 3), (2, 3), (1, 9)])
    code, out, _ = run(capsys, "audit", f, "--k", "3", "--t", "3")
    assert code == 0 and json.loads(out)["pass"]
    assert run(capsys, "audit", f, "--k", "3", "--t", "2")[0] == 1
    even = write("e.json", [(0, 2), (1, 2)])
    assert run(capsys, "audit", even)[0] == 1


def test_shift_and_split(capsys, write, tmp_path):
    f = write("c.json", [(0, 3), (1, 3), (2, 3)], 3, 3)
    out = str(tmp_path / "s.json")
    assert run(capsys, "shift", f, "--by", "4", "-o", out)[0] == 0
    assert [c.residue for c in load_system(out).congruences] == [1, 2, 0]
    code, text, _ = run(capsys, "split", f, "--k", "3", "--m", "5", "--variant", "coprime", "-o", out)
    assert code == 0 and json.loads(text)["multiplicity"] == 8
    assert run(capsys, "verify", out)[0] == 0
    assert run(capsys, "split", f, "--k", "3", "--m", "9", "--variant", "coprime", "-o", out)[0] == 2


def test_subset_cover_and_seq_check(capsys, write, tmp_path):
    base = write("n.json", [(0, 9), (3, 9), (6, 9), (1, 3), (2, 3)], 9, 3)
    out = str(tmp_path / "sub.json")
    code, text, _ = run(capsys, "subset-cover", "--j", "0", "--exceptions", "3", "6", "--base", base, "-o", out)
    assert code == 0 and json.loads(text)["congruences"] == 5
    code, text, _ = run(capsys, "seq-check", out, "--limit", "3000")
    assert code == 0 and json.loads(text)["violations"] == []
    bare = str(tmp_path / "bare.json")
    run(capsys, "subset-cover", "--j", "0", "--base", base, "-o", bare)
    code, text, _ = run(capsys, "seq-check", bare, "--limit", "3000", "--sequences", "perfect")
    assert code == 1 and json.loads(text)["violations"] == [6]


def test_seq_residues(capsys):
    code, out, _ = run(capsys, "seq-residues", "--sequence", "two_squares", "--mod", "9", "--limit", "10000")
    assert code == 0 and json.loads(out) == [0, 1, 2, 4, 5, 7, 8]


def test_validate_and_expand_file(capsys, tmp_path):
    good = tmp_path / "g.cov"
    good.write_text('(cover-tree :id "g" :qmin 3 :k 3 :t 3 (node 3 (leaf 3) (leaf 3) (leaf 3)))')
    assert run(capsys, "validate", str(good))[0] == 0
    out = str(tmp_path / "g.json")
    code, text, _ = run(capsys, "expand", "--file", str(good), "-o", out)
    assert code == 0 and json.loads(text)["k_count"] == 3
    bad = tmp_path / "b.cov"
    bad.write_text('(cover-tree :id "b" :qmin 3 :k 3 :t 3 (node 3 (leaf 3) (leaf 3) (leaf 3) (leaf 3)))')
    code, text, _ = run(capsys, "validate", str(bad))
    assert code == 1 and json.loads(text)[0]["code"] == "SlotCountMismatch"
    broken = tmp_path / "x.cov"
    broken.write_text("(node 3")
    assert run(capsys, "validate", str(broken))[0] == 2
    assert run(capsys, "expand", "--file", str(broken), "-o", out)[0] == 2


def test_expand_too_large_figure(capsys, tmp_path):
    code, _, err = run(capsys, "expand", "--figure", "thm_9_times_3", "-o", str(tmp_path / "x.json"))
    assert code == 2 and "ExpansionTooLarge" in err


def test_console_entry_point(write):
    f = write("c.json", [(0, 3), (1, 3), (2, 3)])
    proc = subprocess.run([sys.executable, "-m", "oddcover.cli", "verify", f], capture_output=True, text=True)
    assert proc.returncode == 0 and '"Covers"' in proc.stdout
