"""Plain reader against joint selector+reader on quasar-like open QA.

Each question has 10 paragraphs, most of them distractors. The plain
reader ranks answers with reader_only; the joint model uses the combined
strategy.

    python demos/openqa_benchmark.py [seed ...]
"""

import sys

from qadapt.benchmarks import openqa_benchmark

seeds = [int(s) for s in sys.argv[1:]] or [0, 1, 2, 3, 4]
print(f"{'seed':>4}  {'reader S.Acc':>12} {'reader MRR':>10}  {'joint S.Acc':>11} {'joint MRR':>9}")
for seed in seeds:
    r = openqa_benchmark(seed)
    d, p = r["drqa"], r["pspr"]
    print(f"{seed:>4}  {100 * d['s_acc']:12.1f} {100 * d['mrr']:10.1f}  {100 * p['s_acc']:11.1f} "
          f"{100 * p['mrr']:9.1f}", flush=True)
