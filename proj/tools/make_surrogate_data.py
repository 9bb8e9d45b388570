#!/usr/bin/env python3
"""Generate the bundled surrogate survival datasets.

The two public cohorts shipped under data/ are simulated surrogates: they
reproduce the schema, marginal ranges, event rates, and approximate
discrimination of the originals, but every row is synthetic. Regenerate with

    python3 tools/make_surrogate_data.py [outdir]
"""

import json
import sys

import numpy as np


def sim_times(rng, lp, base_rate, cens_rate, admin_cap):
    n = len(lp)
    rate = base_rate * np.exp(lp)
    t_event = rng.exponential(1.0 / rate)
    t_cens = np.minimum(rng.exponential(1.0 / cens_rate, size=n), admin_cap)
    time = np.minimum(t_event, t_cens)
    event = (t_event <= t_cens).astype(int)
    return np.round(np.maximum(time, 1.0)).astype(int), event


def make_gbsg2(outdir, rng):
    n = 686
    age = np.clip(rng.normal(53, 10, n), 21, 80).round().astype(int)
    menostat = (rng.random(n) < 1 / (1 + np.exp(-(age - 50) / 2.5))).astype(int)
    hor_th = (rng.random(n) < 0.36).astype(int)
    tgrade = rng.choice(3, size=n, p=[0.12, 0.64, 0.24])
    pnodes = np.clip(1 + rng.negative_binomial(1.2, 0.25, n), 1, 51)
    progrec = np.clip(np.exp(rng.normal(3.0, 1.8, n)) - 1, 0, 2380).round().astype(int)
    estrec = np.clip(np.exp(rng.normal(3.4, 1.7, n)) - 1, 0, 1144).round().astype(int)
    tsize = np.clip(rng.normal(28, 14, n), 3, 120).round().astype(int)

    # true log-hazard: saturating node effect, log-scale progrec, and genuine
    # product interactions keep structure a main-effects model cannot capture
    pn = np.minimum(pnodes, 20)
    lp = (
        0.105 * pn
        - 0.29 * np.log1p(progrec)
        + 0.51 * tgrade
        - 0.36 * hor_th
        + 0.011 * (tsize - 28)
        + 0.55 * ((age - 53) / 14.0) ** 2
        + 0.022 * hor_th * (tsize - 28)
        + 0.0050 * (pn - 5) * (tsize - 28)
        + 0.35 * (menostat - 0.5) * (tgrade - 1.1)
    )
    lp = 1.20 * (lp - lp.mean())

    time, event = sim_times(rng, lp, base_rate=1 / 2900.0, cens_rate=1 / 3800.0,
                            admin_cap=2660)

    grade_levels = ["I", "II", "III"]
    with open(f"{outdir}/gbsg2.csv", "w") as f:
        f.write("age,estrec,horTh,menostat,pnodes,progrec,tgrade,tsize,time,cens\n")
        for i in range(n):
            f.write(
                f"{age[i]},{estrec[i]},{['no', 'yes'][hor_th[i]]},"
                f"{['Pre', 'Post'][menostat[i]]},{pnodes[i]},{progrec[i]},"
                f"{grade_levels[tgrade[i]]},{tsize[i]},{time[i]},{event[i]}\n"
            )

    schema = [
        {"name": "age", "kind": "continuous", "levels": []},
        {"name": "estrec", "kind": "continuous", "levels": []},
        {"name": "horTh", "kind": "nominal", "levels": ["no", "yes"]},
        {"name": "menostat", "kind": "nominal", "levels": ["Pre", "Post"]},
        {"name": "pnodes", "kind": "continuous", "levels": []},
        {"name": "progrec", "kind": "continuous", "levels": []},
        {"name": "tgrade", "kind": "ordinal", "levels": ["I", "II", "III"]},
        {"name": "tsize", "kind": "continuous", "levels": []},
    ]
    with open(f"{outdir}/gbsg2.schema.json", "w") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")
    print(f"gbsg2: n={n} events={event.sum()} ({event.mean():.3f})")


def make_act(outdir, rng):
    n = 1151
    age = np.clip(rng.normal(35, 9, n), 15, 70).round().astype(int)
    sex = (rng.random(n) < 0.83).astype(int)  # 1 = male
    raceth = rng.choice(4, size=n, p=[0.52, 0.28, 0.16, 0.04])
    ivdrug = rng.choice(3, size=n, p=[0.84, 0.02, 0.14])
    hemophil = (rng.random(n) < 0.02).astype(int)
    karnof = rng.choice(4, size=n, p=[0.03, 0.07, 0.22, 0.68])  # 70/80/90/100
    cd4 = np.clip(rng.normal(85, 65, n), 0, 500).round().astype(int)
    priorzdv = np.clip(np.exp(rng.normal(2.6, 0.9, n)), 0.5, 240).round(1)
    strat2 = (cd4 <= 50).astype(int)
    tx = (rng.random(n) < 0.5).astype(int)
    txgrp = np.where(tx == 1, rng.choice([1, 2, 3], size=n), 0)

    karnof_score = np.array([70, 80, 90, 100])[karnof]
    lp = (
        -0.0105 * cd4
        + 0.95 * (karnof_score <= 80)
        - 0.62 * tx
        + 0.55 * ((age - 35) / 9.0) ** 2
        + 0.25 * (ivdrug != 0)
        + 0.0 * hemophil
    )
    lp = 1.45 * (lp - lp.mean())

    # heavy censoring: short administrative follow-up
    time, event = sim_times(rng, lp, base_rate=1 / 7200.0, cens_rate=1 / 1500.0,
                            admin_cap=365)

    race_levels = ["White", "Black", "Hispanic", "Other"]
    iv_levels = ["never", "currently", "previously"]
    grp_levels = ["placebo", "A", "B", "C"]
    kar_levels = ["70", "80", "90", "100"]
    with open(f"{outdir}/act.csv", "w") as f:
        f.write("tx,txgrp,strat2,sex,raceth,ivdrug,hemophil,karnof,cd4,priorzdv,"
                "age,time,censor\n")
        for i in range(n):
            f.write(
                f"{['control', 'treatment'][tx[i]]},{grp_levels[txgrp[i]]},"
                f"{['no', 'yes'][strat2[i]]},{['female', 'male'][sex[i]]},"
                f"{race_levels[raceth[i]]},{iv_levels[ivdrug[i]]},"
                f"{['no', 'yes'][hemophil[i]]},{kar_levels[karnof[i]]},"
                f"{cd4[i]},{priorzdv[i]},{age[i]},{time[i]},{event[i]}\n"
            )

    schema = [
        {"name": "tx", "kind": "nominal", "levels": ["control", "treatment"]},
        {"name": "txgrp", "kind": "nominal", "levels": grp_levels},
        {"name": "strat2", "kind": "nominal", "levels": ["no", "yes"]},
        {"name": "sex", "kind": "nominal", "levels": ["female", "male"]},
        {"name": "raceth", "kind": "nominal", "levels": race_levels},
        {"name": "ivdrug", "kind": "nominal", "levels": iv_levels},
        {"name": "hemophil", "kind": "nominal", "levels": ["no", "yes"]},
        {"name": "karnof", "kind": "ordinal", "levels": kar_levels},
        {"name": "cd4", "kind": "continuous", "levels": []},
        {"name": "priorzdv", "kind": "continuous", "levels": []},
        {"name": "age", "kind": "continuous", "levels": []},
    ]
    with open(f"{outdir}/act.schema.json", "w") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")
    print(f"act: n={n} events={event.sum()} ({event.mean():.3f})")


def main():
    outdir = sys.argv[1] if len(sys.argv) > 1 else "data"
    rng = np.random.default_rng(20260824)
    make_gbsg2(outdir, rng)
    make_act(outdir, rng)


if __name__ == "__main__":
    main()
