"""
Loading and encoding the Adult census data
==========================================

Parse both raw files, drop incomplete rows, dummy-code the categorical
attributes, standardize the continuous ones with train-split statistics and
look at how income differs between women and men.
"""

from pathlib import Path

import numpy as np

from dpfair import SplitSpec, group_statistics, load_adult

DATA = Path(__file__).resolve().parents[1] / "data" / "adult"

ds = load_adult(DATA, SplitSpec(shuffle_seed=0))
print(f"{len(ds)} complete rows, {ds.n_features} encoded columns")

# one row per split
for split in ("train", "validation", "test"):
    n = int((ds.split == split).sum())
    print(f"  {split:<10} {n:>6}  ({100 * n / len(ds):.1f}%)")

# the schema records how each column was built
for col in ds.columns[:8]:
    print("  ", col.name, col.kind)

# continuous columns are centred on the train split only
train = ds.subset("train")
age = ds.column_names.index("age")
print(f"train age mean {train.features[:, age].mean():+.2e}, sd {train.features[:, age].std(ddof=1):.6f}")
print(f"test age mean  {ds.subset('test').features[:, age].mean():+.4f}")

# the disparity the fairness models have to deal with
gs = group_statistics(ds)
print(f"female share {gs.female_fraction:.3f}")
print(f"low income: women {gs.low_income_rate_female:.3f}, men {gs.low_income_rate_male:.3f}")
print(f"always predicting <=50K on test gives {np.mean(ds.subset('test').labels == 0):.3f}")
