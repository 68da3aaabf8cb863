"""Run packaged experiments and write their CSV/JSON result bundles.

The same runs are available from the shell, for example
``cfsim run --config net.json --experiment ul-rate-cdf --out results/``.
"""
import tempfile
from pathlib import Path

from cfiot.harness import ExperimentSpec, run_experiment
from cfiot.netgen import NetworkConfig

cfg = NetworkConfig(M=32, K=8, tau=8, area_side_m=500.0, seed=41)
out = Path(tempfile.mkdtemp(prefix="cfiot-demo-"))
for exp, kw in (("ul-rate-cdf", {"ul_engine": "rm-ap1"}),
                ("ul-target-ee", {"target_rate": 0.01}),
                ("dl-maxmin", {})):
    bundle = run_experiment(ExperimentSpec(exp, cfg, n_realizations=3, out_dir=str(out / exp), **kw))
    summary = ", ".join(f"{k}={v:.3g}" for k, v in sorted(bundle.ee.items()))
    print(f"{exp:13s} {len(bundle.rows)} rate rows; {summary}")
print(f"files written under {out}:", sorted(p.name for p in (out / "ul-rate-cdf").iterdir()))
