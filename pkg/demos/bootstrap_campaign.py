"""Staged campaign on the bootstrap problem with lambda = 1.2.

Runs plain least squares, then deflation, storing what it admits in a
throwaway registry, and exports the solutions on a grid.

    python3 demos/bootstrap_campaign.py
"""
import logging
import tempfile

import numpy as np

from nndeflate.problems import get_problem
from nndeflate.registry import CampaignConfig, Registry, export_csv, parse_grid, run_campaign

logging.basicConfig(level=logging.INFO, format="%(message)s")

prob = get_problem("bootstrap_a")
root = tempfile.mkdtemp(prefix="nndeflate-demo-")
reg = Registry(root)
recs = run_campaign(prob, CampaignConfig.for_problem(prob), run_seed=0, registry=reg)

grid = parse_grid("0:1:5", 1)
for rec in recs:
    model = rec.load_model()
    print(rec.id, rec.stage, f"residual {rec.residual:.2g}",
          "u on [0, 0.25, .., 1]:", np.round(model(grid)[:, 0], 4))
    export_csv(rec, f"{root}/{rec.id}.csv", grid)
print("registry and CSV files in", root)
