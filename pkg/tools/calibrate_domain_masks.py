"""Search internal mask seeds for the reference domains.

The random (non-special) rows of each domain mask use a frozen internal
seed.  This tool scans candidate seeds and scores each one against the
ranking behaviour the domain is meant to exhibit, then prints the best
candidates so a seed can be frozen into generate._DOMAIN_MASK_SEEDS.

Usage: python tools/calibrate_domain_masks.py [domain] [n_candidates]
"""
from __future__ import annotations

import sys

import numpy as np

from fairrank import generate as gen
from fairrank import model, stats

MASTER_SEED = 42
N_SEEDS = 20
DOMAIN_IDS = {"nlp": 1, "clinical": 2, "av": 3, "cyber": 4}


def simulate(name: str, mask_seed: int) -> dict | None:
    gen._DOMAIN_MASK_SEEDS[name] = mask_seed
    try:
        config = gen.domain_config(name)
    except gen.GenerationError:
        return None
    true_ranking = stats.rank_descending(config.theta_true)
    rho_avg, rho_irt, recov = [], [], []
    disp = {k: {"avg": [], "irt": []} for k in ("true", "fake", "deepscan", "shield")}
    idx = dict(config.special_systems)
    if name == "cyber":
        idx["deepscan"] = config.system_labels.index("DeepScan AI")
        idx["shield"] = config.system_labels.index("Enterprise Shield")
    theta_true_hat = []
    for k in range(N_SEEDS):
        seed = gen.mix_seed(MASTER_SEED, DOMAIN_IDS[name], k)
        m = gen.generate_responses(
            config.theta_true, config.items, config.mask, config.trials, seed,
            config.system_labels, config.item_labels,
        )
        avg = stats.simple_average(m)
        f = model.fit(m)
        if not f.converged:
            return None
        irt = model.rank_by_ability(f)
        rho_avg.append(stats.spearman_rho(avg, true_ranking))
        rho_irt.append(stats.spearman_rho(irt, true_ranking))
        recov.append(
            stats.spearman_rho(
                stats.rank_descending(f.items.b), stats.rank_descending(config.items.b)
            )
        )
        for key, j in idx.items():
            disp[key]["avg"].append(stats.rank_displacement(avg, true_ranking, j))
            disp[key]["irt"].append(stats.rank_displacement(irt, true_ranking, j))
        theta_true_hat.append(f.abilities.theta[idx["true"]])
    return {
        "mask_seed": mask_seed,
        "rho_avg": np.array(rho_avg),
        "rho_irt": np.array(rho_irt),
        "recov": np.array(recov),
        "disp": {k: {m_: np.array(v_) for m_, v_ in v.items()} for k, v in disp.items()},
        "theta_true_hat": np.array(theta_true_hat),
    }


def score(name: str, r: dict) -> tuple[bool, float, str]:
    ra, ri = r["rho_avg"].mean(), r["rho_irt"].mean()
    ra_std = r["rho_avg"].std()
    recov_ok = bool((r["recov"] == 1.0).all())
    true_irt_top = int((r["disp"]["true"]["irt"] == 1 - 1).sum())  # rank 1 => disp 0
    notes = []
    if name == "clinical":
        fake_infl = int((r["disp"]["fake"]["avg"] <= -2).sum())
        ok = (
            0.89 <= ra <= 0.95
            and ri >= 0.992
            and true_irt_top >= 19
            and fake_infl >= 16
            and recov_ok
            and abs(r["theta_true_hat"].mean() - 1.97) <= 0.25
        )
        loss = abs(ra - 0.922) + max(0, 0.996 - ri) * 5 + (20 - fake_infl) * 0.01
        notes.append(f"fake_infl={fake_infl} th={r['theta_true_hat'].mean():.2f}")
    elif name == "av":
        true_disp_avg = r["disp"]["true"]["avg"]
        displaced = int(((true_disp_avg >= 1)).sum())
        ok = (
            0.89 <= ra <= 0.94
            and ri >= 0.996
            and true_irt_top >= 19
            and displaced >= 16
            and recov_ok
        )
        loss = abs(ra - 0.916) + max(0, 1.0 - ri) * 5 + (20 - displaced) * 0.01
        notes.append(f"true_disp_avg={np.mean(true_disp_avg):.2f} displaced={displaced}")
    else:  # cyber
        ds = r["disp"]["deepscan"]["avg"]
        sh = r["disp"]["shield"]["avg"]
        ok = (
            0.78 <= ra <= 0.84
            and ra_std < 0.005
            and ri >= 0.992
            and true_irt_top >= 19
            and recov_ok
            and np.median(ds) >= 2
            and np.median(sh) <= -1
        )
        loss = abs(ra - 0.809) * 10 + ra_std * 100 + abs(np.median(ds) - 3) + abs(np.median(sh) + 2)
        notes.append(f"ds_disp={np.median(ds):.1f} sh_disp={np.median(sh):.1f}")
    notes.append(f"ra={ra:.4f}+-{ra_std:.4f} ri={ri:.4f} recov={recov_ok} irt_top={true_irt_top}")
    return ok, loss, " ".join(notes)


def main() -> None:
    domains = [sys.argv[1]] if len(sys.argv) > 1 else ["clinical", "av", "cyber"]
    n_cand = int(sys.argv[2]) if len(sys.argv) > 2 else 120
    for name in domains:
        print(f"=== {name} ===", flush=True)
        best = []
        for cand in range(n_cand):
            r = simulate(name, cand)
            if r is None:
                continue
            ok, loss, note = score(name, r)
            if ok:
                best.append((loss, cand, note))
                print(f"  seed {cand:4d} OK   loss={loss:.4f}  {note}", flush=True)
        best.sort()
        if best:
            print(f"  BEST for {name}: seed {best[0][1]}  {best[0][2]}")
        else:
            print(f"  no seed passed all gates for {name}; rerun with more candidates")


if __name__ == "__main__":
    main()
