"""fedzip: error-bounded lossy compression for federated-learning model
updates, plus the simulation and analysis tooling around it.

The package splits into:

* tensor_store: named flat tensors and the FSZT checkpoint format
* ebcodec:      error-bounded lossy codecs over f32 arrays
* lossless:     store / DEFLATE byte codec used for metadata
* pipeline:     per-entry routing and the FSZU update wire format
* netsim:       transfer-time model, break-even, selection procedures
* flsim:        FedAvg loop on a synthetic task with a tiny network
* analysis:     error distributions, Laplace fits, report files
* cli:          the `fedzip` command
"""

from . import analysis, cli, ebcodec, flsim, lossless, netsim, pipeline, tensor_store
from .ebcodec import (
    CBT,
    PQ,
    CodecBenchRecord,
    CodecSpec,
    ErrorBound,
    LossyBlob,
    bench_codec,
    compress_cbt,
    compress_pq,
    decompress_cbt,
    decompress_pq,
    register_lossy_codec,
    resolve_abs_bound,
)
from .errors import FedzipError
from .lossless import LosslessSpec, lossless_compress, lossless_decompress
from .netsim import (
    CostInputs,
    NetworkModel,
    RealClock,
    SelectionGrid,
    VirtualClock,
    breakeven_bandwidth,
    emulate_send,
    select_codec,
    select_epsilon,
    transfer_time,
    worthwhile,
)
from .pipeline import (
    CompressedEntry,
    CompressedUpdate,
    RoutingRule,
    compress_update,
    decompress_update,
    measure_pipeline,
    partition,
)
from .tensor_store import (
    StateDict,
    TensorRecord,
    flatten,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"
