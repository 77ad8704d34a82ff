"""
The uknow command line, end to end
==================================

Every pipeline stage is a subcommand: ingest -> featurize -> build ->
split -> train -> eval, plus stats/sweep/score/retrieve/classify.  All
commands print machine-readable JSON on stdout, write a RunManifest
recording parameters and input hashes, and exit 0/1/2/3 for
success/usage/data/internal outcomes.
"""

import json
import tempfile
from importlib import resources
from pathlib import Path

from uknow.cli import main as uknow

toy = resources.files("uknow") / "data" / "toy"
work = Path(tempfile.mkdtemp(prefix="uknow_demo_"))
print("working in", work)

# 1. ingest: validate and normalize the raw manifests into a corpus dir
status = uknow(["ingest", "--pairs", str(toy / "pairs.tsv"),
                "--news", str(toy / "news.jsonl"),
                "--out", str(work / "corpus")])
print("ingest exit status:", status)

# 2. featurize: deterministic stub features for every owner
uknow(["featurize", "--corpus", str(work / "corpus"), "--dim", "32",
       "--seed", "7", "--out", str(work / "features.jsonl")])

# 3. build: the five-view graph at tau 0.8
uknow(["build", "--corpus", str(work / "corpus"),
       "--features", str(work / "features.jsonl"),
       "--tau", "0.8", "--seed", "11", "--out", str(work / "graph")])

# every run writes a manifest with parameters and input hashes
manifest = json.loads((work / "graph" / "run_manifest.json").read_text())
print("build manifest command:", manifest["command"])
print("build manifest inputs:", len(manifest["input_hashes"]), "files")

# 4. stats and a threshold sweep, both as JSON
uknow(["stats", str(work / "graph"), "--out", str(work / "stats.json")])
stats = json.loads((work / "stats.json").read_text())
print("rho_mean from stats:", round(stats["rho_mean"], 3))
uknow(["sweep", str(work / "graph"), "--taus", "0.5:0.9:0.1",
       "--out", str(work / "sweep.json")])

# 5. split edges 80/10/10, then train on the train partition only
uknow(["split", str(work / "graph"), "--ratios", "0.8,0.1,0.1",
       "--name", "demo", "--seed", "3"])
uknow(["train", str(work / "graph"), "--dim", "16", "--epochs", "30",
       "--seed", "0", "--split-name", "demo",
       "--out", str(work / "model")])

# 6. evaluate the held-out partition with filtered ranking
uknow(["eval", str(work / "model"), str(work / "graph"),
       "--split", "test", "--split-name", "demo",
       "--out", str(work / "eval.json")])
print("test metrics:", json.loads((work / "eval.json").read_text()))

# usage errors exit 1, data errors exit 2
print("bad tau exits:", uknow(["build", "--corpus", str(work / "corpus"),
                               "--features", str(work / "features.jsonl"),
                               "--tau", "7", "--out", str(work / "g2")]))
print("missing graph exits:", uknow(["stats", str(work / "nowhere")]))
