"""
This is a library for symbolic disentangled representations with
hypervectors: objects are bundles of role-filler bindings, single factors
are edited by feature exchange, and disentanglement is scored with the
DMM and DCM metrics over a render-and-classify loop.

Using the high-level API is easy:

```
>>> config = hdfactors.ExperimentConfig(dim=1024, master_seed=0).validate()
>>> report = hdfactors.roundtrip(config, trials=10000)
>>> metrics, table = hdfactors.evaluate(config, pipeline="ideal")
```

"""

from hdfactors.api import (
    dim_ablation,
    evaluate,
    generate,
    noise_sweep,
    roundtrip,
    seed_stability,
    verify_exchange,
)
from hdfactors.config import ExperimentConfig
