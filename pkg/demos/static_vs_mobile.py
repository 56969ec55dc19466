"""Per-pair throughput as n grows: fixed nodes against two-hop relaying on mobile nodes.

Small horizons keep this under a minute; the acceptance suite runs the full sizes.
"""

from netcap.analysis import SweepSpec, scenario_report, sweep

ns = (64, 128, 256, 512)
for name, scenario in (("static", "static-unicast"), ("mobile", "mobile-two-hop")):
    spec = SweepSpec(scenario, ns, seeds=2, fixed={"T": 3000})
    rep = scenario_report(sweep(spec), scenario)
    print(f"--- {name}")
    print(rep.table())
    print()
