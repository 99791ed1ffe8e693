"""
Walk the plant through the four migration stages using the shipped scenario
files and print what each stage adds.

Run:  python demos/migration_stages.py
"""

import json
from pathlib import Path

from ponsim import scenario_from_dict, simulate

HERE = Path(__file__).resolve().parent.parent / "scenarios"

for name in ("baseline", "video_overlay", "coexistence", "full_wdm"):
    doc = json.loads((HERE / f"{name}.json").read_text())
    m = simulate(scenario_from_dict(doc)).metrics
    p = m.plant
    tdm = [o for o in m.onts.values() if o.kind == "tdm"]
    wdm = [o for o in m.onts.values() if o.kind == "wdm"]
    print(f"== {doc['stage']}")
    if tdm:
        total = sum(o.throughput_mbps for o in tdm)
        print(f"   TDM ONTs: {len(tdm)}, upstream {total:.2f} Mb/s, "
              f"utilization {p.upstream_utilization:.3f}, collisions {p.collisions_total}")
    print(f"   video receivers: {p.video_receivers_count}")
    if wdm:
        rates = ", ".join(f"{o.throughput_mbps:.1f}" for o in wdm)
        print(f"   WDM links up: {p.wdm_links_up}/{len(wdm)}; per-link Mb/s: {rates}")
    if len(p.wdm_link_timeline) > 1:
        steps = "; ".join(f"{t}C -> {up} up" for _, t, up in p.wdm_link_timeline[1:])
        print(f"   AWG temperature steps: {steps}")
    print(f"   conservation holds: {m.conservation.passed}")
