"""
Range three ONTs at different distances, then show what happens to the same
plant when the ONTs ignore their equalization delays.

Run:  python demos/ranging_walkthrough.py
"""

from ponsim import Simulation, scenario_from_dict

doc = {
    "stage": "TDM_BASELINE",
    "plant": {"splitter": {"ports": 8}},
    "onts": [{"id": 1, "fiber_m": 500}, {"id": 2, "fiber_m": 7000},
             {"id": 3, "fiber_m": 19000}],
    "traffic": {"default": {"model": "poisson", "rate_cells_per_s": 60000}},
    "duration_s": 0.05,
    "seed": 11,
}

ranged = Simulation(scenario_from_dict(doc)).run().metrics
print("ONT  fiber_m  measured RTT  equalization delay  RTT + delay")
for spec in doc["onts"]:
    r = ranged.plant.ranging[str(spec["id"])]
    print(f"{spec['id']:3d}  {spec['fiber_m']:7d}  {r['measured_rtt']:12d}  "
          f"{r['equalization_delay']:18d}  {r['measured_rtt'] + r['equalization_delay']:11d}")
print(f"collisions with equalization: {ranged.plant.collisions_total}")

unequalized = Simulation(scenario_from_dict(doc), force_zero_equalization=True).run().metrics
print(f"collisions when the delays are ignored: {unequalized.plant.collisions_total} "
      f"(first in frame {unequalized.plant.first_collision_frame}, "
      f"data started in frame {unequalized.plant.data_start_frame})")
for ont_id, m in unequalized.onts.items():
    print(f"  ONT {ont_id}: delivered {m.delivered}, lost in collisions {m.collided}")
