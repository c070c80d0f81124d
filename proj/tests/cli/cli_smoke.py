"""End-to-end checks of the adcloud command line.

Every JSON document the CLI prints is validated against the shipped schema;
exit codes, artifacts and byte-level determinism are checked along the way.
"""
import argparse
import filecmp
import json
import os
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

failures = []


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


class Cli:
    def __init__(self, exe, schemas, home, cwd):
        self.exe, self.schemas, self.cwd = exe, schemas, cwd
        self.env = dict(os.environ, ADCLOUD_HOME=str(home))

    def run(self, *args):
        return subprocess.run([self.exe, *map(str, args)], cwd=self.cwd, env=self.env,
                              capture_output=True, text=True, timeout=300)

    def json(self, schema, *args):
        p = self.run(*args, "--json")
        check(p.returncode == 0, f"{' '.join(map(str, args[:2]))} exits 0 ({p.stderr.strip()[:200]})")
        doc = json.loads(p.stdout)
        self.validate(schema, doc, " ".join(map(str, args[:2])))
        return doc

    def validate(self, schema, doc, what):
        s = json.loads((self.schemas / f"{schema}.schema.json").read_text())
        try:
            jsonschema.validate(doc, s)
            check(True, f"{what} output matches {schema}.schema.json")
        except jsonschema.ValidationError as e:
            check(False, f"{what} output matches {schema}.schema.json: {e.message}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--adcloud", required=True)
    ap.add_argument("--algo", required=True)
    ap.add_argument("--schemas", required=True, type=pathlib.Path)
    a = ap.parse_args()

    with tempfile.TemporaryDirectory(prefix="adcloud-cli-") as tmp:
        tmp = pathlib.Path(tmp)
        cli = Cli(a.adcloud, a.schemas, tmp / "home", tmp)

        # surface and exit codes
        check(cli.run("--help").returncode == 0, "--help exits 0")
        check(cli.run("frobnicate").returncode == 2, "unknown subcommand exits 2")
        p = cli.run("cluster", "start", "--mem", "-5")
        check(p.returncode == 2 and "tiers.mem" in p.stderr, "negative capacity exits 2 naming tiers.mem")
        cli.json("cluster_start", "cluster", "start", "--workers", 2, "--slots", "cpu=2,accel=1")

        # configs: canonical dumps validate and are fixed points
        (tmp / "cluster.json").write_text(json.dumps({"workers": 2}))
        (tmp / "train.json").write_text(json.dumps({"model": "LINEAR_REGRESSION", "learning_rate": 0.5,
                                                    "iterations": 200, "shards": 2}))
        for kind, f in [("cluster", "cluster.json"), ("train", "train.json")]:
            p = cli.run("config", "check", kind, f)
            doc = json.loads(p.stdout)
            cli.validate(f"{kind}_config", doc, f"config check {kind}")
            (tmp / f"canon-{f}").write_text(json.dumps(doc))
            again = json.loads(cli.run("config", "check", kind, f"canon-{f}").stdout)
            check(again == doc, f"{kind} config canonical form is a fixed point")

        # map: 10 s synthetic drive, pipelined vs staged, determinism
        cli.json("map_synth", "map", "synth", "--out", "drive", "--duration", 10)
        cli.json("map_synth", "map", "synth", "--out", "drive2", "--duration", 10)
        check(all(filecmp.cmp(tmp / "drive" / f, tmp / "drive2" / f, shallow=False)
                  for f in ["odom.bag", "imu.bag", "gps.bag", "lidar.bag", "labels.json"]),
              "same seed gives identical drive artifacts")
        cfg = json.loads((tmp / "drive" / "map.json").read_text())
        cli.validate("map_config", cfg, "map synth map.json")
        cli.validate("label_spec", json.loads((tmp / "drive" / "labels.json").read_text()), "map synth labels.json")
        piped = cli.json("map_build", "map", "build", "--config", "drive/map.json", "--out", "piped.adhm",
                         "--metrics", "piped-metrics.json")
        staged = cli.json("map_build", "map", "build", "--config", "drive/map.json", "--out", "staged.adhm",
                          "--mode", "staged", "--workers", 3)
        check((tmp / "piped.adhm").read_bytes()[:4] == b"ADHM", "map file has ADHM magic")
        check(filecmp.cmp(tmp / "piped.adhm", tmp / "staged.adhm", shallow=False), "pipelined and staged maps identical")
        check(piped["bytes_persisted"] < staged["bytes_persisted"], "pipelined persists fewer bytes than staged")
        check(piped["header"]["cell_size"] == 0.05, "map header cell size is 0.05")
        check((tmp / "piped-metrics.json").exists(), "map metrics file written")
        cli.json("map_build", "map", "build", "--config", "drive/map.json", "--out", "again.adhm")
        check(filecmp.cmp(tmp / "piped.adhm", tmp / "again.adhm", shallow=False), "rebuilding gives the same map")
        (tmp / "bad-labels.json").write_text(json.dumps({"lanes": [{"id": 1}]}))
        cfg["labels"] = "../bad-labels.json"
        (tmp / "drive" / "bad.json").write_text(json.dumps(cfg))
        check(cli.run("map", "build", "--config", "drive/bad.json", "--out", "x.adhm").returncode == 2,
              "malformed label spec exits 2")

        # training
        cli.json("data_synth", "data", "synth-linear", "--out", "d.bin", "--n", 400, "--seed", 3)
        res = cli.json("train_result", "train", "--config", "train.json", "--data", "d.bin", "--out", "params.json")
        w = res["params"]["values"]
        check(abs(w[0] - 2) < 1e-3 and abs(w[1] - 1) < 1e-3, f"y = 2x + 1 recovered: {w}")
        lines = (tmp / "params.loss.csv").read_text().splitlines()
        check(lines[0] == "iteration,mean_loss" and len(lines) == 201, "loss curve CSV written")
        res4 = cli.json("train_result", "train", "--config", "train.json", "--data", "d.bin", "--out", "p4.json",
                        "--workers", 4)
        check(res4["params"] == res["params"], "parameters identical on 2 and 4 workers")

        # replay
        cli.json("sim_synth", "sim", "synth", "--out", "log.adbg", "--topics", "lidar,odom", "--duration", 5)
        rep = cli.json("sim_report", "sim", "run", "--bag", "log.adbg", "--algo", a.algo, "--algo-arg", "identity",
                       "--golden", "log.adbg", "--report", "report.json")
        check(rep["records_replayed"] == 100 and rep["mismatches"] == 0, "identity replay matches its golden")
        check((tmp / "report.json").exists(), "replay report written")
        check(cli.run("sim", "run", "--bag", "log.adbg", "--algo", a.algo, "--algo-arg", "fail").returncode == 1,
              "failing algorithm exits 1")

        # generic jobs
        (tmp / "in").mkdir()
        (tmp / "in" / "log.adbg").write_bytes((tmp / "log.adbg").read_bytes())
        plan = {"source": {"glob": "in/*.adbg", "partitioner": {"kind": "by_record_count", "records": 16}},
                "ops": [{"name": "bridge", "kind": "BRIDGE", "config": [{"utf8": a.algo}, {"utf8": "flip-even"}]}],
                "output": "flipped.bin"}
        (tmp / "plan.json").write_text(json.dumps(plan))
        cli.validate("plan", plan, "plan.json")
        sub = cli.json("job_submit", "job", "submit", "plan.json")
        check((tmp / "flipped.bin").exists(), "job output written")
        cli.json("job_metrics", "job", "metrics", sub["job_id"])
        cli.json("storage_stats", "storage", "stats")
        check(cli.run("job", "metrics", "job-9999").returncode == 2, "unknown job id exits 2")
        plan["ops"] = [{"name": "no.such.op"}]
        (tmp / "bad-plan.json").write_text(json.dumps(plan))
        check(cli.run("job", "submit", "bad-plan.json").returncode == 2, "unknown op exits 2")

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
