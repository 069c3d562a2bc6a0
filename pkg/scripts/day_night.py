"""Why the spreading predictor misprices night slots, and what the LP predictor does instead.

Prints both predicted night curves and how much medium-value work each
BasicEcon variant places at night.
"""

from era.domain import format_money
from era.scenario import build_oracle, load_scenario, simulation_config
from era.simulator import run_simulation


def curve_text(c):
    return ", ".join(f"({format_money(p)}, {q:g})" for p, q in zip(c.prices, c.quantities)) or "empty"


def main():
    scn = load_scenario("day-night")
    for kind in ("spreading", "lp"):
        oracle = build_oracle(scn, kind)
        print(f"{kind:>9} day curve:   {curve_text(oracle.full_curve(0, 'core'))}")
        print(f"{kind:>9} night curve: {curve_text(oracle.full_curve(1, 'core'))}")
        m = run_simulation(simulation_config(scn, "basicEcon", oracle=oracle)).metrics
        per = {k: format_money(v.welfare) for k, v in sorted(m.per_class.items())}
        print(f"{'':>9} welfare by class {per}, share {m.welfare_share:.3f}")


if __name__ == "__main__":
    main()
