"""Pretrain on a large squad-like set, fine-tune on a small bioasq-like set.

Prints strict accuracy and MRR for the three arms on each seed:
No-Pre (target data only), No-Fine (source model, target vocabulary
merged) and Pre+Fine (source model trained further on the target).

    python demos/transfer_benchmark.py [seed ...]
"""

import sys

from qadapt.benchmarks import transfer_benchmark

ARMS = ("no_pre", "no_fine", "pre_fine")

seeds = [int(s) for s in sys.argv[1:]] or [0, 1, 2, 3, 4]
print(f"{'seed':>4}  " + "  ".join(f"{arm:>16}" for arm in ARMS))
for seed in seeds:
    result = transfer_benchmark(seed)
    cells = [f"{100 * result[a]['s_acc']:6.1f} / {100 * result[a]['mrr']:6.1f}" for a in ARMS]
    print(f"{seed:>4}  " + "  ".join(f"{c:>16}" for c in cells), flush=True)
print("cells are S.Acc / MRR on the 50 held-out target questions")
