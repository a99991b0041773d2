"""Single-process federated simulation.

Both methods share one engine.  Training proceeds in ``M`` sub-stages of
``G_T / M`` global epochs; sub-stage ``m`` trains the prototype columns
``[m * D_hat, (m + 1) * D_hat)`` of the full model against the matching column
slice of one master basis.  The remaining ``G - G_T`` epochs refine the
concatenated model on a server-chosen random subset of ``D0`` columns per
epoch.  The baseline is the degenerate schedule ``M = 1, G_T = G``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable, List, Optional

import numpy as np

from . import costs
from .datasets import ClientShard, Dataset, PartitionSpec, partition
from .errors import ConfigError, InvalidArgumentError, ProtocolError
from .hdspace import ProjectionBasis, encode_batch, make_basis, slice_columns
from .prototype import (
    PositionSubset,
    PrototypeModel,
    accuracy,
    bundle_init,
    retrain,
)

# independent random streams derived from the master seed
STREAM_BASIS = 1
STREAM_RFFM = 2
STREAM_PARTITION = 3
STREAM_CLIENT_ORDER = 4
STREAM_POSITIONS = 5
STREAM_SUBSAMPLE = 6

AGGREGATE_TOLERANCE = 1e-9


def derive_seed(master_seed: int, stream: int, *extra: int) -> int:
    state = np.random.SeedSequence([master_seed, stream, *extra]).generate_state(2, np.uint64)
    return int(state[0]) << 64 | int(state[1])


def _rng(master_seed, stream, *extra):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, stream, *extra])))


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int = 20
    dim: int = 5000
    num_submodels: int = 1
    refine_positions: Optional[int] = None
    global_epochs: int = 100
    training_epochs: Optional[int] = None
    local_epochs: int = 5
    alpha: float = 0.035
    master_seed: int = 0
    partition: str = "iid"
    classes_per_client: int = 2
    dataset: str = ""
    traffic_bytes_per_element: int = 8
    storage_bytes_per_element: int = 4

    @property
    def submodel_dim(self) -> int:
        return self.dim // self.num_submodels

    @property
    def D0(self) -> int:
        return self.submodel_dim if self.refine_positions is None else self.refine_positions

    @property
    def G_T(self) -> int:
        if self.training_epochs is not None:
            return self.training_epochs
        return min(self.num_submodels, self.global_epochs)

    @property
    def G_R(self) -> int:
        return self.global_epochs - self.G_T

    def problems(self) -> dict:
        out = {}
        if self.num_clients < 1:
            out["num_clients"] = "must be >= 1"
        if self.dim < 1:
            out["dim"] = "must be >= 1"
        if self.num_submodels < 1:
            out["num_submodels"] = "must be >= 1"
        elif self.dim % self.num_submodels:
            out["num_submodels"] = f"M={self.num_submodels} must divide D={self.dim}"
        if self.global_epochs < 0:
            out["global_epochs"] = "must be >= 0"
        if self.local_epochs < 1:
            out["local_epochs"] = "must be >= 1"
        if not 0 < self.alpha <= 1:
            out["alpha"] = "must lie in (0, 1]"
        if self.num_submodels >= 1 and "global_epochs" not in out:
            g_t = self.G_T
            if g_t < 0 or g_t > self.global_epochs:
                out["training_epochs"] = f"G_T={g_t} must lie in [0, G={self.global_epochs}]"
            elif g_t % self.num_submodels:
                out["training_epochs"] = f"M={self.num_submodels} must divide G_T={g_t}"
            elif self.global_epochs > 0 and g_t == 0:
                out["training_epochs"] = "at least one training sub-stage is required"
        if not 1 <= self.D0 <= self.dim:
            out["refine_positions"] = f"D0={self.D0} must lie in [1, D={self.dim}]"
        if self.partition not in ("iid", "non-iid"):
            out["partition"] = "must be 'iid' or 'non-iid'"
        if self.classes_per_client < 1:
            out["classes_per_client"] = "must be >= 1"
        for name in ("traffic_bytes_per_element", "storage_bytes_per_element"):
            if getattr(self, name) < 1:
                out[name] = "must be >= 1"
        return out

    def validate(self) -> "FederationConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def as_baseline(self) -> "FederationConfig":
        return replace(self, num_submodels=1, training_epochs=self.global_epochs, refine_positions=None)

    def resolved(self) -> dict:
        out = asdict(self)
        out.update(
            submodel_dim=self.submodel_dim,
            refine_positions=self.D0,
            training_epochs=self.G_T,
            refining_epochs=self.G_R,
        )
        return out


@dataclass(frozen=True)
class RoundRecord:
    round: int
    stage: str
    accuracy: float
    uplink_bytes: int
    cum_uplink_bytes: int
    cum_flops: int
    seconds: float


@dataclass
class ClientState:
    client_id: int
    shard: ClientShard
    features: np.ndarray
    labels: np.ndarray
    model: Optional[PrototypeModel] = None


def aggregate(models: List[PrototypeModel], subset: Optional[PositionSubset] = None) -> PrototypeModel:
    """Elementwise mean of client models, reduced in list order.

    With ``subset`` only those columns are averaged; the remaining columns
    must already agree across clients and are taken from the first model.
    """
    if not models:
        raise ProtocolError("no models to aggregate")
    shape = models[0].P.shape
    for i, m in enumerate(models):
        if m.P.shape != shape:
            raise ProtocolError(f"client {i} sent shape {m.P.shape}, expected {shape}")
    if subset is None:
        total = np.zeros(shape)
        for m in models:
            total += m.P
        return PrototypeModel(total / len(models))
    cols = subset.indices
    if cols[-1] >= shape[1]:
        raise ProtocolError(f"position {cols[-1]} outside a {shape[1]}-column model")
    keep = np.ones(shape[1], dtype=bool)
    keep[cols] = False
    ref = models[0].P[:, keep]
    for i, m in enumerate(models[1:], start=1):
        if not np.allclose(m.P[:, keep], ref, rtol=0.0, atol=AGGREGATE_TOLERANCE):
            raise ProtocolError(f"client {i} changed columns outside the refining subset")
    total = np.zeros((shape[0], cols.size))
    for m in models:
        total += m.P[:, cols]
    out = models[0].P.copy()
    out[:, cols] = total / len(models)
    return PrototypeModel(out)


def concatenate(submodels: List[PrototypeModel]) -> PrototypeModel:
    if not submodels:
        raise ProtocolError("nothing to concatenate")
    C = submodels[0].num_classes
    for i, m in enumerate(submodels):
        if m.num_classes != C:
            raise ProtocolError(f"sub-model {i} has {m.num_classes} classes, expected {C}")
    return PrototypeModel(np.hstack([m.P for m in submodels]))


def sample_positions(master_seed: int, round_index: int, D: int, D0: int) -> PositionSubset:
    """Server-drawn refining positions, identical for every client of a round."""
    if not 1 <= D0 <= D:
        raise InvalidArgumentError(f"D0={D0} must lie in [1, {D}]")
    if D0 == D:
        return PositionSubset(np.arange(D))
    rng = _rng(master_seed, STREAM_POSITIONS, round_index)
    return PositionSubset(np.sort(rng.choice(D, size=D0, replace=False)))


def client_order(master_seed: int, client_id: int, n: int) -> np.ndarray:
    """Fixed per-client visiting order of the local rows, used for the whole run."""
    return _rng(master_seed, STREAM_CLIENT_ORDER, client_id).permutation(n)


class FederatedRun:
    """One simulated training run.

    ``dataset`` holds the encoder inputs (already normalized / feature-mapped).
    After :meth:`run` the final global model is available as ``model``.
    ``on_round`` is called with every new :class:`RoundRecord`.
    """

    def __init__(self, config: FederationConfig, dataset: Dataset, threads: int = 1,
                 on_round: Optional[Callable[[RoundRecord], None]] = None):
        self.config = config.validate()
        self.dataset = dataset
        self.threads = max(1, int(threads))
        self.on_round = on_round
        self.basis: ProjectionBasis = make_basis(
            derive_seed(config.master_seed, STREAM_BASIS), dataset.feature_dim, config.dim
        )
        spec = PartitionSpec(
            config.num_clients, config.partition,
            derive_seed(config.master_seed, STREAM_PARTITION), config.classes_per_client,
        )
        self.clients: List[ClientState] = []
        for shard in partition(dataset, spec):
            rows = shard.indices[client_order(config.master_seed, shard.client_id, shard.indices.size)]
            self.clients.append(
                ClientState(shard.client_id, shard, dataset.train_x[rows], dataset.train_y[rows])
            )
        self.model: Optional[PrototypeModel] = None
        self.pre_refine_model: Optional[PrototypeModel] = None
        self.records: List[RoundRecord] = []

    def _map(self, fn, items):
        if self.threads == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def run(self) -> List[RoundRecord]:
        cfg = self.config
        C = self.dataset.num_classes
        n_total = sum(c.labels.size for c in self.clients)
        d = self.dataset.feature_dim
        D_hat = cfg.submodel_dim
        test_H = encode_batch(self.basis, self.dataset.test_x)
        test_y = self.dataset.test_y
        alpha, L = cfg.alpha, cfg.local_epochs
        per_stage = cfg.G_T // cfg.num_submodels if cfg.num_submodels else 0

        self.records = []
        cum_bytes = 0
        cum_flops = 0
        encodings = [[] for _ in self.clients]
        trained: List[PrototypeModel] = []
        global_round = 0

        def emit(stage, model, width, flops, started):
            nonlocal cum_bytes, cum_flops, global_round
            global_round += 1
            sent = costs.round_traffic(cfg.num_clients, C, width, cfg.traffic_bytes_per_element)
            cum_bytes += sent
            cum_flops += flops
            rec = RoundRecord(
                global_round, stage, accuracy(model, test_H, test_y), sent, cum_bytes,
                cum_flops, time.perf_counter() - started,
            )
            self.records.append(rec)
            if self.on_round is not None:
                self.on_round(rec)

        # training stage: M sub-models, G_T / M global epochs each
        for m in range(cfg.num_submodels if cfg.G_T else 0):
            block = slice_columns(self.basis, m * D_hat, (m + 1) * D_hat)
            current: Optional[PrototypeModel] = None
            for e in range(per_stage):
                started = time.perf_counter()
                flops = L * costs.c3(n_total, C, D_hat)
                if e == 0:
                    flops += costs.c1(n_total, D_hat, d) + costs.c2(n_total, D_hat)

                    def local(i):
                        client = self.clients[i]
                        H = encode_batch(block, client.features)
                        start = bundle_init(H, client.labels, C, alpha)
                        return H, retrain(start, H, client.labels, alpha, L)[0]

                    out = self._map(local, range(len(self.clients)))
                    for i, (H, _) in enumerate(out):
                        encodings[i].append(H)
                    locals_ = [mdl for _, mdl in out]
                else:
                    broadcast = current

                    def local(i):
                        client = self.clients[i]
                        return retrain(broadcast, encodings[i][m], client.labels, alpha, L)[0]

                    locals_ = self._map(local, range(len(self.clients)))
                current = aggregate(locals_)
                padding = [PrototypeModel.zeros(C, D_hat)] * (cfg.num_submodels - m - 1)
                emit(f"train-{m + 1}", concatenate(trained + [current] + padding), D_hat, flops, started)
            trained.append(current)

        if not trained:
            self.model = PrototypeModel.zeros(C, cfg.dim)
            return self.records
        model = concatenate(trained)
        self.pre_refine_model = model
        full = [np.hstack(blocks) if len(blocks) > 1 else blocks[0] for blocks in encodings]
        del encodings

        # refining stage: one shared random subset of D0 columns per epoch
        for r in range(cfg.G_R):
            started = time.perf_counter()
            subset = sample_positions(cfg.master_seed, global_round + 1, cfg.dim, cfg.D0)
            broadcast = model

            def local(i):
                return retrain(broadcast, full[i], self.clients[i].labels, alpha, L, subset)[0]

            model = aggregate(self._map(local, range(len(self.clients))), subset)
            emit("refine", model, cfg.D0, L * costs.c3(n_total, C, cfg.D0), started)
        self.model = model
        return self.records


def run_baseline(config: FederationConfig, dataset: Dataset, threads: int = 1) -> List[RoundRecord]:
    """Full-size FedAvg training for ``G`` global epochs."""
    return FederatedRun(config.as_baseline(), dataset, threads).run()


def run_refhdc(config: FederationConfig, dataset: Dataset, threads: int = 1) -> List[RoundRecord]:
    """Sub-model training followed by subset refining of the concatenation."""
    return FederatedRun(config, dataset, threads).run()
