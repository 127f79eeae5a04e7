"""Regenerate the held-out study and its large-sample true effects.

    python3 data/heldout/make_heldout.py
"""

from pathlib import Path

from fcma.dataset import write_study
from fcma.report import write_oracle
from fcma.simgen import gen_replication, make_scenario, oracle_effects

HERE = Path(__file__).resolve().parent
SEED = 90210
N, T = 800, 50


def main():
    sc = make_scenario("simple", n=N, T=T)
    write_study(gen_replication(sc, seed=SEED), HERE)
    values, mc_se = oracle_effects(sc, N=100_000, seed=SEED + 1)
    write_oracle(HERE / "oracle.csv", values, mc_se)


if __name__ == "__main__":
    main()
