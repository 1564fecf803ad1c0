import io
import json

from fairshare.cli import main
from fairshare.generators import two_triangle_instance
from fairshare.model import dumps_instance


def run(argv, stdin=""):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, io.StringIO(stdin), out, err)
    return code, out.getvalue(), err.getvalue()


def test_generate_then_shares():
    code, text, _ = run(["generate", "triangles", "--n", "3"])
    assert code == 0
    code, out, _ = run(["shares", "--agent", "0"], text)
    assert code == 0
    rep = json.loads(out)
    assert (rep["aps"], rep["mms"]) == ("2/1", "1/1")


def test_round_trip_file(tmp_path):
    path = tmp_path / "inst.json"
    code, text, _ = run(["generate", "random", "--class", "xos", "--m", "4", "--n", "2", "--seed", "5"])
    path.write_text(text)
    code, out, _ = run(["shares", str(path)])
    assert code == 0 and len(json.loads(out)) == 2


def test_verify_appendix():
    code, out, _ = run(["verify", "appendix", "--k", "6", "--samples", "1000"])
    assert code == 0 and json.loads(out)["checked"] == 1000


def test_bad_json_is_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{bad")
    code, _, err = run(["allocate", str(bad), "--algo", "one-sixth"])
    assert code == 1 and "error" in err
    assert run(["allocate", str(tmp_path / "missing.json"), "--algo", "apsxos"])[0] == 1
    assert run(["nonsense"])[0] == 1


def test_allocate_algorithms():
    text = dumps_instance(two_triangle_instance(3))
    for algo in ("apsxos", "one-sixth", "four-seventeenths", "welfare-max"):
        code, out, _ = run(["allocate", "--algo", algo], text)
        assert code == 0, algo
        json.loads(out)


def test_bid_transcript_is_seed_stable():
    text = dumps_instance(two_triangle_instance(3))
    a = run(["bid", "--strategies", "one-shot,random:2,greedy", "--seed", "7", "--tiebreak", "seeded"], text)
    b = run(["bid", "--strategies", "one-shot,random:2,greedy", "--seed", "7", "--tiebreak", "seeded"], text)
    assert a == b and a[0] == 0
    assert json.loads(a[1].strip().splitlines()[-1])["final"]


def test_falsification_exit_code(monkeypatch):
    import fairshare.ladder as lad
    from fairshare.errors import TheoremViolated

    def broken(y):
        raise TheoremViolated("forced")

    monkeypatch.setattr(lad, "verify_appendix", broken)
    code, out, _ = run(["verify", "appendix", "--k", "3", "--samples", "2"])
    assert code == 2 and json.loads(out)["falsification"] == "TheoremViolated"


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("FAIRSHARE_SEED", "11")
    a = run(["generate", "random", "--m", "3"])
    b = run(["generate", "random", "--m", "3", "--seed", "11"])
    assert a == b


def test_exante_and_relations():
    code, text, _ = run(["generate", "vector", "--n", "2", "--class", "xos"])
    code, out, _ = run(["exante", "--share", "mms"], text)
    assert code == 0 and json.loads(out)["ratio"] == "3/4"
    assert run(["verify", "relations"], text)[0] == 0
    assert run(["verify", "ladder"], text)[0] == 0
