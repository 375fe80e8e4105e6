# %% [markdown]
# # The command-line pipeline
#
# gen-data -> train -> forecast -> evaluate, driven from Python through the
# same entry point as the ``htcnn`` console script.

# Training is cut to 10 epochs to keep this quick.

# %%
import pathlib
import tempfile

from htcnn.cli import main

root = pathlib.Path(tempfile.mkdtemp())
(root / "hyper.txt").write_text("epochs = 10\n")

# %%
main(["gen-data", "--seed", "0", "--out", str(root / "data")])
for strategy, model in [("Direct", "SN"), ("SubRegionAGG", "HTCNN.A2")]:
    main(["train", "--dataset", str(root / "data"), "--strategy", strategy, "--model", model,
          "--hyper", str(root / "hyper.txt"), "--seeds", "0", "--out", str(root / "models")])
main(["forecast", "--models", str(root / "models"), "--dataset", str(root / "data"), "--out", str(root / "fc")])
main(["evaluate", str(root / "fc" / "forecast.csv"), "--dataset", str(root / "data"), "--out", str(root / "rep")])

# %%
print((root / "rep" / "report.txt").read_text())
print(sorted(p.name for p in root.rglob("*") if p.is_file())[:12])
