#!/usr/bin/env python3
"""End-to-end checks of the tubespoof binary: exit codes and output schemas."""

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

CLI = None
SCHEMAS = None

ADAPTER = r'''
import json, sys
log = open(sys.argv[1], "a")
def send(m):
    log.write(json.dumps(m) + "\n"); log.flush()
    sys.stdout.write(json.dumps(m) + "\n"); sys.stdout.flush()
send({"protocol": "asi-adapter/1", "labels": ["hi", "lo"]})
for line in sys.stdin:
    req = json.loads(line)
    log.write(line if line.endswith("\n") else line + "\n")
    peak = max(abs(x) for x in req["samples"])
    send({"id": req["id"], "scores": {"hi": 1.0 + peak, "lo": 1.0}})
'''


def registry():
    resources = []
    for p in SCHEMAS.glob("*.schema.json"):
        doc = json.loads(p.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp(prefix="tubespoof_cli_"))
        cls.registry = registry()
        cls.validated = set()
        # one planted fixture and model shared by the slower commands
        out = cls.run_ok(None, "synth-corpus", "--out", cls.tmp / "fx", "--seed", 4,
                         "--distractors", 2, "--enroll-utts", 3, "--attack-utts", 2, "--duration", 1.0)
        cls.planted = json.loads(out)
        cls.run_ok(None, "enroll", "--corpus", cls.tmp / "fx" / "corpus", "--out", cls.tmp / "model.json")
        cls.model = cls.tmp / "model.json"
        cls.attacker = cls.tmp / "fx" / "attacker"
        cls.victim = cls.planted["planted"][0]["label"]

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)
        missing = {p.name for p in SCHEMAS.glob("*.schema.json")} - cls.validated
        if missing:
            raise AssertionError(f"schemas never exercised: {sorted(missing)}")

    @staticmethod
    def invoke(*args):
        return subprocess.run([str(CLI), *map(str, args)], capture_output=True, text=True, timeout=600)

    @classmethod
    def run_ok(cls, schema, *args):
        r = cls.invoke(*args)
        if r.returncode != 0:
            raise AssertionError(f"{args} exited {r.returncode}: {r.stderr}")
        if schema:
            cls.check_schema(schema, json.loads(r.stdout))
        return r.stdout

    @classmethod
    def check_schema(cls, name, doc):
        schema = json.loads((SCHEMAS / name).read_text())
        jsonschema.Draft202012Validator(schema, registry=cls.registry).validate(doc)
        cls.validated.add(name)

    def assert_exit(self, code, *args):
        r = self.invoke(*args)
        self.assertEqual(r.returncode, code, f"{args}: stdout={r.stdout[:300]} stderr={r.stderr[:300]}")
        if code != 0:
            self.assertTrue(r.stderr.strip(), f"{args} failed silently")
        return r

    def write_json(self, name, doc):
        p = self.tmp / name
        p.write_text(json.dumps(doc))
        return p

    def test_usage_errors_exit_2(self):
        for args in [(), ("no-such-command",), ("tube-info", "--length", "0.4"),
                     ("tube-info", "--length", "abc", "--diameter", "0.02"),
                     ("two-tube", "--l1", "0.1"), ("design", "--f0", "400"), ("filter", "--in", "x.wav"),
                     ("validate",), ("enroll", "--corpus", "x"), ("identify", "--in", "x.wav", "--bogus"),
                     ("attack", "--attacker", "x"), ("reachable",), ("stats", "consistency"),
                     ("stats", "match-rate", "--simulated", "/nonexistent.json", "--second", "/nonexistent.json"),
                     ("synth-corpus",), ("synth-corpus", "--out", self.tmp / "s", "--rate", "11025"),
                     ("synth-corpus", "--out", self.tmp / "s", "--plant", "nocolon"),
                     ("pitch",), ("compare", "--a", "x.wav"),
                     ("attack", "--attacker", "x", "--target", "y", "--strategy", "rand1"),
                     ("identify", "--model", "m", "--adapter", "a", "--in", "x.wav")]:
            with self.subTest(args=args):
                self.assert_exit(2, *args)

    def test_help_and_version_exit_0(self):
        self.assert_exit(0, "--help")
        self.assert_exit(0, "attack", "--help")
        self.assertIn("0.1.0", self.assert_exit(0, "--version").stdout)

    def test_tube_info(self):
        text = self.run_ok(None, "tube-info", "--length", 0.406, "--diameter", 0.0345)
        self.assertIn("402.", text)
        out = json.loads(self.run_ok("tube_info.schema.json", "tube-info", "--length", 0.406,
                                     "--diameter", 0.0345, "--json"))
        self.assertAlmostEqual(out["f0_Hz"], 402.16, delta=0.5)
        self.assert_exit(1, "tube-info", "--length", 0.4, "--diameter", 0.5)
        self.assert_exit(1, "tube-info", "--length", 0.4, "--diameter", 0.02, "--temperature", 100)

    def test_two_tube(self):
        out = json.loads(self.run_ok("two_tube.schema.json", "two-tube", "--l1", 0.0953, "--d1", 0.021,
                                     "--l2", 0.10, "--d2", 0.01, "--json"))
        self.assertTrue(out["roots"])
        self.assertIn("Hz", self.run_ok(None, "two-tube", "--l1", 0.0953, "--d1", 0.021, "--l2", 0.10, "--d2", 0.01))
        none = json.loads(self.run_ok("two_tube.schema.json", "two-tube", "--l1", 0.0953, "--d1", 0.021,
                                      "--l2", 0.10, "--d2", 0.01, "--nyquist", 100, "--json"))
        self.assertEqual(none["roots"], [])
        self.assertTrue(none["warning"])
        self.assertIn("no", self.run_ok(None, "two-tube", "--l1", 0.0953, "--d1", 0.021, "--l2", 0.10,
                                        "--d2", 0.01, "--nyquist", 100).lower())
        self.assert_exit(1, "two-tube", "--l1", 0.3, "--d1", 0.02, "--l2", 0.3, "--d2", 0.02)

    def test_design(self):
        out = json.loads(self.run_ok("design.schema.json", "design", "--f0", 400, "--q0", 40))
        self.assertFalse(out["saturated"])
        self.assert_exit(1, "design", "--f0", 5000, "--q0", 40)

    def test_filter_and_pitch_and_compare(self):
        wav = self.attacker / "utt01.wav"
        filtered = self.tmp / "filtered.wav"
        out = json.loads(self.run_ok("filter.schema.json", "filter", "--in", wav, "--out", filtered,
                                     "--length", 0.406, "--diameter", 0.0345))
        self.assertEqual(out["sample_rate"], 8000)
        self.assertTrue(filtered.exists())
        self.assert_exit(1, "filter", "--in", self.tmp / "missing.wav", "--out", filtered,
                         "--length", 0.406, "--diameter", 0.0345)
        self.run_ok("pitch_track.schema.json", "pitch", "--in", wav)
        self.assert_exit(1, "pitch", "--in", self.tmp / "missing.wav")
        cmp = json.loads(self.run_ok("compare.schema.json", "compare", "--a", wav, "--b", wav))
        self.assertEqual(cmp["dtw_distance"], 0.0)
        self.assert_exit(1, "compare", "--a", wav, "--b", self.tmp / "missing.wav")

    def test_validate(self):
        report_path = self.tmp / "validation.json"
        out = json.loads(self.run_ok("validation_report.schema.json", "validate", "--length", 0.406,
                                     "--diameter", 0.0345, "--out", report_path))
        self.assertEqual(out["result"], "PASS")
        self.check_schema("validation_report.schema.json", json.loads(report_path.read_text()))
        r = self.assert_exit(1, "validate", "--length", 0.406, "--diameter", 0.0345, "--q0", 1000)
        self.check_schema("validation_report.schema.json", json.loads(r.stdout))
        self.assertEqual(json.loads(r.stdout)["result"], "FAIL")
        self.assert_exit(1, "validate", "--length", 0.01, "--diameter", 0.0345)

    def test_enroll_and_identify(self):
        out = self.tmp / "m2.json"
        rep = json.loads(self.run_ok("enroll_report.schema.json", "enroll", "--corpus",
                                     self.tmp / "fx" / "corpus", "--out", out))
        self.assertEqual(rep["labels"], self.planted["labels"])
        self.check_schema("speaker_model.schema.json", json.loads(out.read_text()))
        ident = json.loads(self.run_ok("identification.schema.json", "identify", "--model", self.model,
                                       "--in", self.attacker / "utt01.wav"))
        self.assertIn(ident["label"], self.planted["labels"])
        self.assertAlmostEqual(sum(ident["scores"].values()) if isinstance(ident["scores"], dict)
                               else sum(ident["scores"]), 1.0, places=9)
        corrupt = self.tmp / "corrupt.json"
        corrupt.write_text('{"labels": 3}')
        self.assert_exit(1, "identify", "--model", corrupt, "--in", self.attacker / "utt01.wav")
        self.assert_exit(1, "enroll", "--corpus", self.tmp / "nowhere", "--out", self.tmp / "m3.json")
        self.assert_exit(2, "identify", "--in", self.attacker / "utt01.wav")

    def test_identify_via_adapter(self):
        script = self.tmp / "adapter.py"
        script.write_text(ADAPTER)
        log = self.tmp / "adapter.log"
        cmd = f"{sys.executable} {script} {log}"
        ident = json.loads(self.run_ok("identification.schema.json", "identify", "--adapter", cmd,
                                       "--in", self.attacker / "utt01.wav"))
        self.assertEqual(ident["label"], "hi")
        lines = log.read_text().splitlines()
        self.assertGreaterEqual(len(lines), 3)
        for line in lines:
            self.check_schema("adapter_messages.schema.json", json.loads(line))
        self.assert_exit(1, "identify", "--adapter", "exit 0", "--in", self.attacker / "utt01.wav")
        self.assert_exit(1, "identify", "--adapter", "sleep 30", "--timeout", 0.3,
                         "--in", self.attacker / "utt01.wav")

    def test_attack(self):
        outdir = self.tmp / "attack_out"
        args = ["attack", "--model", self.model, "--attacker", self.attacker, "--target", self.victim,
                "--population", 20, "--max-iterations", 2, "--seed", 9, "--output-dir", outdir]
        first = self.run_ok("attack_result.schema.json", *args)
        second = self.run_ok("attack_result.schema.json", *args)
        self.assertEqual(first, second)
        written = outdir / f"attack_{self.victim}.json"
        self.check_schema("attack_result.schema.json", json.loads(written.read_text()))
        csv = (outdir / f"attack_{self.victim}.csv").read_text().splitlines()
        self.assertEqual(csv[0], "target,success,best_score,invocations,f0_Hz,Q0,L_m,d_m")
        self.assertEqual(len(csv), 2)
        self.assert_exit(1, "attack", "--model", self.model, "--attacker", self.attacker, "--target", "nobody",
                         "--population", 20, "--max-iterations", 1, "--output-dir", outdir)
        self.assert_exit(1, "attack", "--model", self.tmp / "missing.json", "--attacker", self.attacker,
                         "--target", self.victim, "--output-dir", outdir)
        self.assert_exit(1, "attack", "--model", self.model, "--attacker", self.attacker, "--target", self.victim,
                         "--population", 2, "--output-dir", outdir)

        config = self.write_json("run.json", {"oracle": {"model": str(self.model)},
                                              "paths": {"output_dir": str(self.tmp / "cfg_out")},
                                              "de": {"population": 10, "max_iterations": 1, "seed": 3}})
        self.check_schema("run_config.schema.json", json.loads(config.read_text()))
        res = json.loads(self.run_ok("attack_result.schema.json", "attack", "--config", config,
                                     "--attacker", self.attacker, "--target", self.victim))
        self.assertEqual(res["invocations"], 20)
        # flags win over the file
        res = json.loads(self.run_ok("attack_result.schema.json", "attack", "--config", config, "--population", 12,
                                     "--attacker", self.attacker, "--target", self.victim))
        self.assertEqual(res["invocations"], 24)
        bad = self.write_json("bad_run.json", {"oracle": {"model": str(self.model)}, "surprise": 1})
        self.assert_exit(1, "attack", "--config", bad, "--attacker", self.attacker, "--target", self.victim)
        two = json.loads(self.run_ok("attack_result.schema.json", "attack", "--config", config, "--mode", "two_tube",
                                     "--attacker", self.attacker, "--target", self.victim))
        self.assertEqual(two["mode"], "two_tube")

    def test_reachable(self):
        outdir = self.tmp / "reach_out"
        out = json.loads(self.run_ok("reachable.schema.json", "reachable", "--model", self.model,
                                     "--attacker", self.attacker, "--exclude", "attacker", "--budget", 20,
                                     "--population", 10, "--seed", 1, "--output-dir", outdir))
        self.assertEqual(out["targets"], len(self.planted["labels"]) - 1)
        self.assertNotIn("attacker", out["results"])
        for r in out["results"].values():
            self.assertLessEqual(r["invocations"], 20)
        self.check_schema("reachable.schema.json", json.loads((outdir / "reachable.json").read_text()))
        rows = (outdir / "reachable.csv").read_text().splitlines()
        self.assertEqual(len(rows), out["targets"] + 1)
        self.assert_exit(1, "reachable", "--model", self.model, "--attacker", self.tmp / "nowhere",
                         "--output-dir", outdir)
        self.assert_exit(1, "reachable", "--model", self.model, "--attacker", self.attacker, "--budget", 5,
                         "--population", 10, "--output-dir", outdir)

    def test_pitch_study(self):
        outdir = self.tmp / "study_out"
        out = json.loads(self.run_ok("pitch_shift.schema.json", "study", "pitch-shift", "--synthetic-count", 10,
                                     "--seed", 2, "--output-dir", outdir))
        self.check_schema("pitch_shift.schema.json", json.loads((outdir / "pitch_shift.json").read_text()))
        header = (outdir / "pitch_shift.csv").read_text().splitlines()[0]
        self.assertEqual(header, "tube_L_m,tube_d_m,signal_id,mean_shift_Hz")
        again = self.run_ok(None, "study", "pitch-shift", "--synthetic-count", 10, "--seed", 2, "--output-dir", outdir)
        self.assertEqual(json.loads(again), out)
        empty = self.tmp / "no_signals"
        empty.mkdir(exist_ok=True)
        self.assert_exit(1, "study", "pitch-shift", "--signals", empty, "--output-dir", outdir)

    def test_stats(self):
        gap_path = self.tmp / "gap.json"
        gap = json.loads(self.run_ok("confidence_gap.schema.json", "stats", "confidence-gap", "--model", self.model,
                                     "--clean", self.attacker, "--adversarial", self.attacker, "--out", gap_path))
        self.assertEqual(gap["gap_difference"], 0.0)
        self.check_schema("confidence_gap.schema.json", json.loads(gap_path.read_text()))
        self.assert_exit(1, "stats", "confidence-gap", "--model", self.model, "--clean", self.attacker,
                         "--adversarial", self.tmp / "nowhere")

        sim = json.loads(self.run_ok("similarity.schema.json", "stats", "similarity", "--model", self.model,
                                     "--attack", self.attacker, "--victim", self.victim))
        self.assertEqual(len(sim["victim"]), 2)
        self.assertEqual(sim["victim_label"], self.victim)
        self.run_ok("similarity.schema.json", "stats", "similarity", "--model", self.model, "--attack", self.attacker,
                    "--victim", self.victim, "--nonvictim", "attacker")
        self.assert_exit(1, "stats", "similarity", "--model", self.model, "--attack", self.attacker,
                         "--victim", "ghost")

        runs = self.write_json("runs.json", [list("abcdefghij"), list("abcdxfghij")])
        con = json.loads(self.run_ok("consistency.schema.json", "stats", "consistency", "--runs", runs))
        self.assertAlmostEqual(con["consistency_percent"], 90.0)
        uneven = self.write_json("uneven.json", [["a"], ["a", "b"]])
        self.assert_exit(1, "stats", "consistency", "--runs", uneven)
        garbage = self.tmp / "garbage.json"
        garbage.write_text("[[")
        self.assert_exit(1, "stats", "consistency", "--runs", garbage)

        sim_map = self.write_json("sim.json", {"u1": "a", "u2": "b", "u3": None})
        same = json.loads(self.run_ok("match_rate.schema.json", "stats", "match-rate",
                                      "--simulated", sim_map, "--second", sim_map))
        self.assertEqual(same["match_rate_percent"], 100.0)
        other = self.write_json("other.json", {"u1": "b", "u2": None, "u3": None})
        self.assertEqual(json.loads(self.run_ok("match_rate.schema.json", "stats", "match-rate", "--simulated",
                                                sim_map, "--second", other))["match_rate_percent"], 0.0)
        keys = self.write_json("keys.json", {"u9": "a"})
        self.assert_exit(1, "stats", "match-rate", "--simulated", sim_map, "--second", keys)

    def test_synth_corpus(self):
        out = json.loads(self.run_ok("planted.schema.json", "synth-corpus", "--out", self.tmp / "fx2", "--seed", 5,
                                     "--distractors", 1, "--enroll-utts", 3, "--duration", 0.5,
                                     "--plant", "v:320:40"))
        self.assertEqual([t["label"] for t in out["planted"]], ["v"])
        self.check_schema("planted.schema.json", json.loads((self.tmp / "fx2" / "planted.json").read_text()))
        self.assert_exit(1, "synth-corpus", "--out", self.tmp / "fx3", "--plant", "v:5000:40")
        self.assert_exit(2, "synth-corpus", "--out", self.tmp / "fx3", "--plant", "v:abc:40")


def main():
    global CLI, SCHEMAS
    parser = argparse.ArgumentParser()
    parser.add_argument("--cli", required=True)
    parser.add_argument("--schemas", required=True)
    args, rest = parser.parse_known_args()
    CLI = Path(args.cli).resolve()
    SCHEMAS = Path(args.schemas).resolve()
    unittest.main(argv=[sys.argv[0], *rest], verbosity=2)


if __name__ == "__main__":
    main()
