"""The batch CLI from end to end, driven programmatically.

Every subcommand is also available as `chaosaudio <subcommand>` from the
shell; this script chains synth -> extract -> tree -> audit -> report in a
temporary directory and prints the artifacts. Re-running any step with the
same seed and config reproduces its outputs byte for byte.
"""

import json
import tempfile
from pathlib import Path

from chaosaudio.cli import main

out = Path(tempfile.mkdtemp(prefix="chaosaudio_cli_"))
cfg = out / "config.json"
cfg.write_text(json.dumps({
    "synth": {"seconds_per_class": {
        "silence": 60, "soft_tone": 60, "loud_noise": 60, "crying": 60
    }},
    "audit": {"per_leaf_n": 3},
}))

run = out / "run"
assert main(["--config", str(cfg), "--seed", "0", "--out", str(run), "synth"]) == 0
wavs = sorted(str(p) for p in run.glob("*.wav"))
assert main(["--seed", "0", "--out", str(run), "extract", *wavs]) == 0
assert main(["--seed", "0", "--out", str(run), "tree",
             "--features", str(run / "features.csv")]) == 0
assert main(["--config", str(cfg), "--seed", "0", "--out", str(run), "audit",
             *wavs, "--predictions", str(run / "tree_predictions.csv")]) == 0
assert main(["--seed", "0", "--out", str(run), "report"]) == 0

print("\nartifacts:")
for p in sorted(run.rglob("*")):
    if p.is_file():
        print(" ", p.relative_to(run))

manifest = json.loads((run / "run_manifest.json").read_text())
print(f"\nlast run manifest: command={manifest['command']}, "
      f"config_hash={manifest['config_hash']}, seed={manifest['seed']}")
