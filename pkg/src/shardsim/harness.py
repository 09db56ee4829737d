"""Scenario configuration, the deterministic per-height simulation loop,
property oracles (safety, liveness, efficiency, message scaling), metrics
and the replayable event log.

One height is one macro-round: view updates, then topology changes, then
committee election plus block agreement, then credential renewals and the
transaction workload.  Every source of randomness is a tagged substream of
the scenario seed, so a config replays to byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .adversary import (
    STRATEGIES,
    AdversaryState,
    activate_due,
    make_strategy,
    schedule_corruption,
)
from .analysis import solve_params
from .blocks import (
    attach_certificate,
    build_proposal,
    committee_size,
    elect_committee,
    shard_sign_block,
)
from .credentials import Credential, derive_credential, epoch_anchor, verify_credential
from .crypto import Prg, encode_int, hash_digest, keygen, sign, tagged_hash, vrf_eval
from .ledger import (
    Block,
    BlockHeader,
    BlockRules,
    Transaction,
    TxOutput,
    apply_block,
    apply_transaction,
    header_hash,
    make_genesis,
    make_transaction,
    validate_block,
)
from .membership import (
    ShardRuntime,
    ShardView,
    expiring_members,
    form_view,
    install_and_diffuse,
    refill_needed,
    update_view,
    view_digest,
)
from .overlay import (
    ROOT_LABEL,
    SizeBounds,
    check_prefix_free_cover,
    label_matches,
    maybe_merge,
    maybe_split,
    route,
    verify_view_transition,
)
from .protocols import (
    MessageMeter,
    ParticipantSet,
    random_beacon,
    shard_entropy,
    vector_consensus,
    verifiable_ba,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def parse_ratio(value) -> Fraction:
    """Ratios come in as exact strings ("1/3") or integers; binary floats
    are rejected so thresholds stay exact."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise ConfigError(f"ratio fields take strings like '1/3' or integers, got {value!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    master_seed: str
    epoch_length: int
    heights: int
    s_min: int
    s_max: int
    mu_core: Fraction
    mu_corrupted: Fraction
    mu: Fraction
    stake_cap: int
    kappa: float
    f_shard: int
    genesis: tuple[tuple[int, int], ...]  # (count, stake) groups
    tx_rate: int = 0
    adversary_strategy: str = "passive"
    adversary_params: Mapping = field(default_factory=dict)
    corrupt_fraction: Fraction | None = None
    force_corrupt_shards: int = 0
    participation: str = "all"
    observers: int = 3
    unsafe_params: bool = False
    name: str = ""

    @property
    def n_credentials(self) -> int:
        return sum(count for count, _ in self.genesis)

    @property
    def corruption_budget(self) -> Fraction:
        return self.corrupt_fraction if self.corrupt_fraction is not None else self.mu

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "ScenarioConfig":
        data = dict(raw)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        try:
            genesis = tuple(
                (int(g["count"]), int(g["stake"])) for g in data.pop("genesis")
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad genesis spec: {exc}") from exc
        adversary = data.pop("adversary", {})
        corrupt = adversary.get("corrupt_fraction")
        kwargs = dict(
            master_seed=str(data.pop("master_seed")),
            epoch_length=int(data.pop("epoch_length")),
            heights=int(data.pop("heights")),
            s_min=int(data.pop("s_min")),
            s_max=int(data.pop("s_max")),
            mu_core=parse_ratio(data.pop("mu_core")),
            mu_corrupted=parse_ratio(data.pop("mu_corrupted")),
            mu=parse_ratio(data.pop("mu")),
            stake_cap=int(data.pop("stake_cap")),
            kappa=float(data.pop("kappa")),
            f_shard=int(data.pop("f_shard")),
            genesis=genesis,
            tx_rate=int(data.pop("tx_rate", 0)),
            adversary_strategy=str(adversary.get("strategy", "passive")),
            adversary_params=dict(adversary.get("params", {})),
            corrupt_fraction=parse_ratio(corrupt) if corrupt is not None else None,
            force_corrupt_shards=int(adversary.get("force_corrupt_shards", 0)),
            participation=str(data.pop("participation", "all")),
            observers=int(data.pop("observers", 3)),
            unsafe_params=bool(data.pop("unsafe_params", False)),
            name=str(data.pop("name", "")),
        )
        if data:
            raise ConfigError(f"unknown config fields: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_mapping(json.load(fh))

    def to_mapping(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "master_seed": self.master_seed,
            "epoch_length": self.epoch_length,
            "heights": self.heights,
            "s_min": self.s_min,
            "s_max": self.s_max,
            "mu_core": str(self.mu_core),
            "mu_corrupted": str(self.mu_corrupted),
            "mu": str(self.mu),
            "stake_cap": self.stake_cap,
            "kappa": self.kappa,
            "f_shard": self.f_shard,
            "genesis": [{"count": c, "stake": s} for c, s in self.genesis],
            "tx_rate": self.tx_rate,
            "adversary": {
                "strategy": self.adversary_strategy,
                "params": dict(self.adversary_params),
                "corrupt_fraction": (
                    str(self.corrupt_fraction) if self.corrupt_fraction is not None else None
                ),
                "force_corrupt_shards": self.force_corrupt_shards,
            },
            "participation": self.participation,
            "observers": self.observers,
            "unsafe_params": self.unsafe_params,
        }

    def validate(self, strict: bool = False) -> list[str]:
        errors = []
        if self.epoch_length < 1:
            errors.append("epoch_length must be >= 1")
        if self.heights < 1:
            errors.append("heights must be >= 1")
        if self.s_min < 1:
            errors.append("s_min must be >= 1")
        if self.s_max < 2 * self.s_min:
            errors.append("s_max must be >= 2 * s_min")
        for name in ("mu_core", "mu_corrupted", "mu"):
            value = getattr(self, name)
            if not (0 < value < 1):
                errors.append(f"{name} must lie strictly between 0 and 1")
        if self.stake_cap < 1:
            errors.append("stake_cap must be >= 1")
        if not self.genesis:
            errors.append("genesis must list at least one UTXO group")
        for count, stake in self.genesis:
            if count < 1:
                errors.append("genesis group count must be >= 1")
            if not (1 <= stake <= self.stake_cap):
                errors.append(f"genesis stake {stake} outside [1, {self.stake_cap}]")
        if self.tx_rate < 0:
            errors.append("tx_rate must be >= 0")
        if self.f_shard < 0:
            errors.append("f_shard must be >= 0")
        if self.observers < 1:
            errors.append("observers must be >= 1")
        if self.adversary_strategy not in STRATEGIES:
            errors.append(f"unknown adversary strategy {self.adversary_strategy!r}")
        if self.corrupt_fraction is not None and self.corrupt_fraction > self.mu:
            errors.append("corrupt_fraction exceeds the adversary stake bound mu")
        if self.participation not in ("all", "none"):
            errors.append(f"unknown participation policy {self.participation!r}")
        if self.force_corrupt_shards < 0:
            errors.append("force_corrupt_shards must be >= 0")

        if strict and self.unsafe_params:
            errors.append("unsafe_params configs rejected under strict parameter checking")
        if not errors and (strict or not self.unsafe_params):
            solved = solve_params(
                self.mu, self.kappa, self.n_credentials, self.stake_cap, self.mu_core
            )
            if not solved.feasible:
                errors.append(
                    "no feasible core size for (mu, kappa, N, stake_cap, mu_core); "
                    "mark unsafe_params for stress runs"
                )
            elif self.s_min < solved.s_min:
                errors.append(
                    f"s_min={self.s_min} below the {solved.s_min} required for "
                    f"kappa={self.kappa}; mark unsafe_params for stress runs"
                )
            elif self.n_credentials < self.s_min:
                errors.append("fewer credentials than s_min: the root shard cannot form")
        return errors


def load_config(path, strict: bool = False) -> ScenarioConfig:
    config = ScenarioConfig.from_file(path)
    errors = config.validate(strict=strict)
    if errors:
        raise ConfigError("; ".join(errors))
    return config


class EventLog:
    """Append-only protocol event records, canonically serialized."""

    def __init__(self):
        self.records: list[dict] = []

    def emit(self, kind: str, height: int, **fields):
        record = {"seq": len(self.records), "kind": kind, "height": height}
        record.update(fields)
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in self.records
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def digest(self) -> str:
        return hash_digest(self.to_jsonl().encode("utf-8")).hex()


_CSV_COLUMNS = (
    "height",
    "block",
    "committee",
    "leader_rounds",
    "corrupted_shards",
    "shards",
    "members",
    "joins",
    "txs_included",
    "messages_total",
)


class Metrics:
    """Per-height simulation records plus run verdicts.

    Append-only and a pure function of the scenario config; serialization
    is canonical so digests can be compared across replays.
    """

    def __init__(self, name: str, n_users: int):
        self.name = name
        self.n_users = n_users
        self.rows: list[dict] = []
        self.incidents: list[dict] = []
        # tx id hex -> {"delivered", "included", "honest"}
        self.latencies: dict[str, dict] = {}
        self.view_violations = 0
        self.summary: dict = {}

    def record_height(self, **fields):
        self.rows.append({col: fields.get(col) for col in _CSV_COLUMNS})

    def incident(self, height: int, kind: str, **fields):
        rec = {"height": height, "kind": kind}
        rec.update(fields)
        self.incidents.append(rec)

    def tx_delivered(self, tx_id: str, height: int, honest: bool):
        self.latencies[tx_id] = {"delivered": height, "included": None, "honest": honest}

    def tx_included(self, tx_id: str, height: int):
        if tx_id in self.latencies:
            self.latencies[tx_id]["included"] = height

    def finish(self, **verdicts):
        self.summary = dict(verdicts)

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "n_users": self.n_users,
            "rows": self.rows,
            "incidents": self.incidents,
            "latencies": self.latencies,
            "view_violations": self.view_violations,
            "summary": self.summary,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def to_csv(self) -> str:
        lines = [",".join(_CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row[col]) for col in _CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hash_digest(self.to_json().encode("utf-8")).hex()


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return "|".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class LivenessReport:
    all_included: bool
    all_within_window: bool
    fraction_within_window: float
    pending: tuple[str, ...]


def check_safety(chains: Sequence[Sequence[Block]]) -> bool:
    """All pairs of honest chains agree at every common height; prefix
    differences (a node lagging behind) are fine."""
    for i in range(len(chains)):
        for j in range(i + 1, len(chains)):
            a, b = chains[i], chains[j]
            for h in range(min(len(a), len(b))):
                if header_hash(a[h].header) != header_hash(b[h].header):
                    return False
    return True


def check_liveness(
    metrics: Metrics, workload: Iterable[str] | None = None, window: int = 2
) -> LivenessReport:
    """Every honest tx delivered during the run must land in an accepted
    block; landing within ``window`` blocks is the efficiency sub-verdict."""
    if workload is None:
        ids = [tx for tx, rec in metrics.latencies.items() if rec["honest"]]
    else:
        ids = list(workload)
    pending = []
    within = 0
    for tx in sorted(ids):
        rec = metrics.latencies.get(tx)
        if rec is None or rec["included"] is None:
            pending.append(tx)
            continue
        if rec["included"] - rec["delivered"] <= window:
            within += 1
    total = len(ids)
    fraction = (within / total) if total else 1.0
    return LivenessReport(
        all_included=not pending,
        all_within_window=not pending and within == total,
        fraction_within_window=fraction,
        pending=tuple(pending),
    )


class Simulation:
    """One deterministic scenario run."""

    def __init__(self, config: ScenarioConfig, strict_params: bool = False):
        errors = config.validate(strict=strict_params)
        if errors:
            raise ConfigError("; ".join(errors))
        self.cfg = config
        self.master = tagged_hash(b"scenario", config.master_seed.encode("utf-8"))
        self.bounds = SizeBounds(config.s_min, config.s_max)
        self.rules = BlockRules(
            stake_cap=config.stake_cap,
            f_shard=config.f_shard,
            mu_core=config.mu_core,
            s_min=config.s_min,
        )
        self.s_c = committee_size(config.f_shard, config.mu_corrupted)
        self.meter = MessageMeter()
        self.events = EventLog()
        self.metrics = Metrics(config.name, config.n_credentials)
        self.strategy = make_strategy(config.adversary_strategy, config.adversary_params)
        self.adv = AdversaryState(
            seed=tagged_hash(b"adversary-seed", self.master), strategy=self.strategy
        )
        self.keyring: dict[bytes, object] = {}
        self.participation: dict[bytes, bool] = {}
        self.chain: list[Block] = []
        self.headers: list[BlockHeader] = []  # credential derivation wants headers
        self.state: dict = {}
        self.utxo_history: dict[int, Mapping] = {}
        self.runtimes: dict[str, ShardRuntime] = {}
        self.directory: dict[str, ShardView] = {}
        self.observer_chains: list[list[Block]] = []
        self.pending: dict[bytes, Transaction] = {}
        self.in_flight: set[bytes] = set()
        self.cred_cache: dict[tuple[bytes, int], Credential] = {}
        self.attempts: dict[int, int] = {}
        self.workload_prg = Prg(tagged_hash(b"workload", self.master))
        self.workload_counter = 0
        self.joins_submitted = 0
        self.n_users = config.n_credentials
        self._setup()

    # -- bootstrap ---------------------------------------------------------

    def _setup(self):
        cfg = self.cfg
        genesis_utxos = []
        idx = 0
        for count, stake in cfg.genesis:
            for _ in range(count):
                kp = keygen(tagged_hash(b"user", self.master, encode_int(idx)))
                self.keyring[kp.pk] = kp
                self.participation[kp.pk] = cfg.participation == "all"
                genesis_utxos.append((kp.pk, stake))
                idx += 1

        genesis = make_genesis(
            genesis_utxos, tagged_hash(b"genesis", self.master), cfg.stake_cap
        )
        # UTXOs are pre-aged by one epoch so first credentials anchor at the
        # genesis block and shards can produce from height 1.
        self.state = apply_transaction({}, genesis.body[0], -cfg.epoch_length)
        self.chain = [genesis]
        self.headers = [genesis.header]
        self.utxo_history[0] = self.state
        self.observer_chains = [[genesis] for _ in range(cfg.observers)]
        self.events.emit(
            "genesis", 0, block=header_hash(genesis.header).hex(), users=self.n_users
        )

        creds = [
            self._credential(pk, 0) for pk in sorted(self.keyring) if self.participation[pk]
        ]
        creds = [c for c in creds if c is not None]
        root = form_view(
            ROOT_LABEL,
            creds,
            0,
            shard_entropy(self.master, ROOT_LABEL, 0, b"bootstrap"),
            cfg.s_min,
        )
        self.directory = {ROOT_LABEL: root}
        self._bootstrap_splits()
        for label, view in sorted(self.directory.items()):
            rt = ShardRuntime(label=label, view=view)
            rt.reset_buffers()
            self._share_honest_buffers(rt)
            self.runtimes[label] = rt
            self.events.emit(
                "view-installed",
                0,
                label=label,
                digest=view_digest(view).hex(),
                core=len(view.core),
                spare=len(view.spare),
            )

        # Targeted corruption first so the stress hook is predictable; the
        # greedy fill only runs when an explicit fraction asks for it (or a
        # non-passive strategy has no forced targets).
        if cfg.force_corrupt_shards:
            self._force_corrupt(cfg.force_corrupt_shards)
        if cfg.corrupt_fraction is not None or (
            cfg.adversary_strategy != "passive" and not cfg.force_corrupt_shards
        ):
            for pk in sorted(self.keyring):
                if self._controlled(pk):
                    continue
                scheduled = schedule_corruption(
                    self.adv,
                    pk,
                    -cfg.epoch_length,
                    self.state,
                    cfg.corruption_budget,
                    cfg.epoch_length,
                )
                if not scheduled:
                    break
                self.events.emit("corruption-scheduled", 0, pk=pk.hex())
        activated = activate_due(self.adv, 0, self.keyring)
        for pk in activated:
            self.events.emit("corruption-active", 0, pk=pk.hex())

    def _bootstrap_splits(self):
        changed = True
        while changed:
            changed = False
            for label in sorted(self.directory):
                plan = maybe_split(label, self.directory[label], self.bounds)
                if plan is None:
                    continue
                del self.directory[label]
                for child_label, members in plan.children:
                    seed = shard_entropy(self.master, child_label, 0, b"bootstrap")
                    self.directory[child_label] = form_view(
                        child_label, members, 0, seed, self.cfg.s_min
                    )
                changed = True
                break
        cover = check_prefix_free_cover(self.directory)
        if not cover:
            raise RuntimeError(f"bootstrap directory invalid: {cover.reason}")

    def _force_corrupt(self, n_shards: int):
        """Stress hook: corrupt enough core members of the first shards to
        push them past the mu_core bound (budget permitting)."""
        for label in sorted(self.runtimes)[:n_shards]:
            view = self.runtimes[label].view
            need = int(self.cfg.mu_core * len(view.core)) + 1
            have = sum(1 for c in view.core if self._controlled(c.pk))
            for cred in view.core:
                if have >= need:
                    break
                if self._controlled(cred.pk):
                    continue
                if schedule_corruption(
                    self.adv,
                    cred.pk,
                    -self.cfg.epoch_length,
                    self.state,
                    self.cfg.corruption_budget,
                    self.cfg.epoch_length,
                ):
                    have += 1
                else:
                    self.metrics.incident(0, "force-corrupt-budget", label=label)
                    return

    def _controlled(self, pk: bytes) -> bool:
        return pk in self.adv.corrupted or pk in self.adv.pending

    def _share_honest_buffers(self, rt: ShardRuntime):
        """Honest core members all receive the same join stream; aliasing
        their buffers to one set keeps mass renewals linear."""
        shared: set = set()
        for cred in rt.view.core:
            if cred.pk not in self.adv.corrupted:
                rt.buffers[cred.pk] = shared

    # -- helpers -----------------------------------------------------------

    def _credential(self, pk: bytes, h: int) -> Credential | None:
        utxo = self.state.get(pk)
        if utxo is None:
            return None
        h0 = utxo.created_height
        if h < h0 + self.cfg.epoch_length:
            return None
        anchor = epoch_anchor(h0, h, self.cfg.epoch_length)
        key = (pk, anchor)
        cached = self.cred_cache.get(key)
        if cached is None:
            cached = derive_credential(pk, h0, h, self.headers, self.cfg.epoch_length)
            self.cred_cache[key] = cached
        return cached

    def _core_byzantine(self, view: ShardView) -> frozenset:
        return frozenset(c.pk for c in view.core if c.pk in self.adv.corrupted)

    def _shard_corrupted(self, view: ShardView) -> bool:
        if not view.core:
            return False
        byz = len(self._core_byzantine(view))
        return Fraction(byz, len(view.core)) > self.cfg.mu_core

    def _honest_view_keyring(self, view: ShardView, include_byzantine: bool) -> dict:
        keys = {}
        for cred in view.core:
            if cred.pk in self.adv.corrupted and not include_byzantine:
                continue
            kp = self.keyring.get(cred.pk)
            if kp is not None:
                keys[cred.pk] = kp.sk
        return keys

    # -- per-height phases ---------------------------------------------------

    def run(self) -> tuple[Metrics, EventLog]:
        for _round in range(1, self.cfg.heights + 1):
            target = len(self.chain)
            self._activate_corruptions(target)
            self._update_views(target)
            self._apply_topology(target)
            accepted = self._produce_block(target)
            if accepted:
                self._renewals_and_workload(target)
        self._finish()
        return self.metrics, self.events

    def _activate_corruptions(self, height: int):
        for pk in activate_due(self.adv, height, self.keyring):
            self.events.emit("corruption-active", height, pk=pk.hex())

    def _update_views(self, height: int):
        for label in sorted(self.runtimes):
            rt = self.runtimes[label]
            if rt.view.height >= height:
                continue
            if rt.view.height < height - 1:
                # Stalled shard catching up one view per round.
                self.metrics.incident(height, "view-catch-up", label=label)
            self._update_one_view(rt, rt.view.height + 1)

    def _update_one_view(self, rt: ShardRuntime, height: int):
        cfg = self.cfg
        old_view = rt.view
        core_pks = tuple(c.pk for c in old_view.core)
        byz = frozenset(pk for pk in core_pks if pk in self.adv.corrupted)
        parts = ParticipantSet(members=core_pks, byzantine=byz)
        contract_holds = len(byz) <= (len(core_pks) - 1) // 3

        # Honest members alias one buffer set; freeze each distinct buffer
        # once so identical slots stay one object (and hash once).
        frozen_by_id: dict[int, frozenset] = {}
        honest_inputs = {}
        for pk in core_pks:
            buf = rt.buffers.get(pk, ())
            key = id(buf)
            if key not in frozen_by_id:
                frozen_by_id[key] = frozenset(buf)
            honest_inputs[pk] = frozen_by_id[key]
        decision = self.strategy.vector_decision(
            core_pks, byz, honest_inputs, contract_holds, purpose="joins"
        )
        vector = vector_consensus(parts, honest_inputs, decision, self.meter)

        eval_height = height - 1  # validity judged at the last accepted block
        expiring = expiring_members(old_view, eval_height)

        def newcomer_valid(cred: Credential) -> bool:
            return label_matches(rt.label, cred.value) and verify_credential(
                cred, eval_height, self.headers, self.utxo_history
            )

        beacon_seed = None
        if refill_needed(old_view, eval_height, cfg.s_min):
            beacon_seed = self._run_beacon(
                rt.label,
                parts,
                height,
                b"refill",
                evaluate=lambda seed: self._score_promotions(
                    old_view, vector, expiring, seed, newcomer_valid
                ),
            )

        upd = update_view(old_view, vector, expiring, beacon_seed, cfg.s_min, newcomer_valid)
        # Replica check: every honest member recomputes the same update from
        # the same decided inputs; any divergence is a view-agreement
        # violation.
        replica = update_view(old_view, vector, expiring, beacon_seed, cfg.s_min, newcomer_valid)
        digest = view_digest(upd.view)
        if view_digest(replica.view) != digest:
            self.metrics.view_violations += 1
            self.metrics.incident(height, "view-divergence", label=rt.label)

        signers = []
        byz_signs = self.strategy.signs()
        for cred in old_view.core:
            if cred.pk in self.adv.corrupted and not byz_signs:
                continue
            kp = self.keyring.get(cred.pk)
            if kp is not None:
                signers.append((cred.pk, sign(kp.sk, digest)))

        transition = verify_view_transition(
            old_view, upd.view, height, expiring, cfg.mu_core, cfg.s_min, signers
        )
        installed = install_and_diffuse(
            upd.view, signers, set(core_pks), self.directory, cfg.mu_core, cfg.s_min
        )
        if installed != bool(transition):
            # Same quorum rule on both paths; disagreement is a bug surface
            # worth flagging loudly in the log.
            self.metrics.incident(
                height, "transition-check-mismatch", label=rt.label, reason=transition.reason
            )
        if not installed:
            rt.stalled = True
            self.metrics.incident(height, "view-install-failed", label=rt.label)
            self.events.emit("view-rejected", height, label=rt.label)
            return

        rt.view = upd.view
        rt.degraded = upd.degraded
        rt.stalled = False
        rt.reset_buffers()
        self._share_honest_buffers(rt)
        self.meter.charge(self.n_users)  # network-wide view notification
        corrupted = self._shard_corrupted(upd.view)
        self.events.emit(
            "view-installed",
            height,
            label=rt.label,
            digest=digest.hex(),
            core=len(upd.view.core),
            spare=len(upd.view.spare),
            promoted=len(upd.promoted),
            newcomers=len(upd.newcomers),
            degraded=upd.degraded,
            corrupted=corrupted,
        )
        if corrupted:
            self.metrics.incident(height, "corrupted-shard", label=rt.label)

    def _score_promotions(self, old_view, vector, expiring, seed, newcomer_valid) -> float:
        """Objective for a seed-grinding beacon quorum: corrupted members
        promoted into the next core."""
        trial = update_view(
            old_view, vector, expiring, seed, self.cfg.s_min, newcomer_valid
        )
        return float(sum(1 for c in trial.view.core if c.pk in self.adv.corrupted))

    def _run_beacon(
        self,
        label: str,
        parts: ParticipantSet,
        height: int,
        purpose: bytes,
        evaluate: Callable[[bytes], float],
    ) -> bytes:
        entropy = shard_entropy(self.master, label, height, purpose)
        chosen = None
        if not parts.within(self.cfg.mu_core):
            chosen = self.strategy.beacon_choice(entropy, evaluate, self.adv.prg())
        seed, _proof = random_beacon(parts, entropy, self.cfg.mu_core, chosen, self.meter)
        self.events.emit(
            "beacon",
            height,
            label=label,
            purpose=purpose.decode("ascii"),
            seed=seed.hex(),
            biased=chosen is not None,
        )
        if chosen is not None:
            self.metrics.incident(height, "beacon-biased", label=label)
        return seed

    def _apply_topology(self, height: int):
        # Splits first, then merges, in label order.
        for label in sorted(self.directory):
            if label not in self.directory:
                continue
            view = self.directory[label]
            plan = maybe_split(label, view, self.bounds)
            if plan is None:
                continue
            parts = ParticipantSet(
                members=tuple(c.pk for c in view.core),
                byzantine=self._core_byzantine(view),
            )
            beacon = self._run_beacon(
                label, parts, height, b"split", evaluate=lambda seed: 0.0
            )
            del self.directory[label]
            del self.runtimes[label]
            child_labels = []
            for child_label, members in plan.children:
                child_seed = tagged_hash(b"child", beacon, child_label.encode("ascii"))
                child = form_view(child_label, members, height, child_seed, self.cfg.s_min)
                self._register_shard(child, height)
                child_labels.append(child_label)
            self.events.emit("split", height, parent=label, children=child_labels)

        merged = True
        while merged:
            merged = False
            for label in sorted(self.directory):
                view = self.directory.get(label)
                if view is None:
                    continue
                plan = maybe_merge(label, view, self.directory, self.bounds)
                if plan is None:
                    if label == ROOT_LABEL and len(view.members()) < self.cfg.s_min:
                        self.runtimes[label].degraded = True
                    continue
                parts = ParticipantSet(
                    members=tuple(c.pk for c in view.core),
                    byzantine=self._core_byzantine(view),
                )
                beacon = self._run_beacon(
                    label, parts, height, b"merge", evaluate=lambda seed: 0.0
                )
                for absorbed in plan.absorbed:
                    del self.directory[absorbed]
                    del self.runtimes[absorbed]
                merged_view = form_view(
                    plan.new_label, plan.members, height, beacon, self.cfg.s_min
                )
                self._register_shard(merged_view, height)
                self.events.emit(
                    "merge", height, label=plan.new_label, absorbed=list(plan.absorbed)
                )
                merged = True
                break

        cover = check_prefix_free_cover(self.directory)
        if not cover:
            raise RuntimeError(f"directory invariant broken at {height}: {cover.reason}")

    def _register_shard(self, view: ShardView, height: int):
        self.directory[view.label] = view
        rt = ShardRuntime(label=view.label, view=view)
        rt.degraded = len(view.core) < self.cfg.s_min
        rt.reset_buffers()
        self._share_honest_buffers(rt)
        self.runtimes[view.label] = rt
        self.meter.charge(self.n_users)
        self.events.emit(
            "view-installed",
            height,
            label=view.label,
            digest=view_digest(view).hex(),
            core=len(view.core),
            spare=len(view.spare),
            degraded=rt.degraded,
            corrupted=self._shard_corrupted(view),
        )

    def _produce_block(self, height: int) -> bool:
        cfg = self.cfg
        prev = self.chain[-1].header
        eligible = sorted(
            label
            for label, rt in self.runtimes.items()
            if not rt.degraded and not rt.stalled and rt.view.height == height
        )
        committee_record: list[str] = []
        accepted_block = None
        outcome_rounds = 0
        # Joins this height's view updates consumed, i.e. submissions from
        # the previous renewals phase.
        joins = self.joins_submitted
        self.joins_submitted = 0
        if not eligible:
            self.metrics.incident(height, "no-eligible-shards")
        else:
            attempt = self.attempts.get(height, 0)
            elect_seed = (
                prev.seed
                if attempt == 0
                else tagged_hash(b"retry", prev.seed, encode_int(attempt))
            )
            committee = elect_committee(eligible, elect_seed, self.s_c)
            committee_record = list(committee.labels)
            if committee.shortfall:
                self.metrics.incident(height, "committee-shortfall", have=len(eligible))
            self.events.emit(
                "committee", height, labels=committee_record, attempt=attempt
            )
            accepted_block, outcome_rounds = self._agree_block(height, prev, committee)

        nu = sum(1 for rt in self.runtimes.values() if self._shard_corrupted(rt.view))
        if accepted_block is None:
            self.attempts[height] = self.attempts.get(height, 0) + 1
            self.metrics.record_height(
                height=height,
                block="",
                committee=committee_record,
                leader_rounds=outcome_rounds,
                corrupted_shards=nu,
                shards=len(self.directory),
                members=sum(len(v.members()) for v in self.directory.values()),
                joins=joins,
                txs_included=0,
                messages_total=self.meter.total,
            )
            return False

        self.metrics.record_height(
            height=height,
            block=header_hash(accepted_block.header).hex(),
            committee=committee_record,
            leader_rounds=outcome_rounds,
            corrupted_shards=nu,
            shards=len(self.directory),
            members=sum(len(v.members()) for v in self.directory.values()),
            joins=joins,
            txs_included=len(accepted_block.body),
            messages_total=self.meter.total,
        )
        return True

    def _agree_block(self, height: int, prev, committee) -> tuple[Block | None, int]:
        cfg = self.cfg
        pending_txs = tuple(self.pending[k] for k in sorted(self.pending))
        proposals: dict[str, Block] = {}
        corrupted_labels = set()
        for label in committee.labels:
            view = self.runtimes[label].view
            core_pks = tuple(c.pk for c in view.core)
            byz = frozenset(pk for pk in core_pks if pk in self.adv.corrupted)
            if self._shard_corrupted(view):
                corrupted_labels.add(label)
            honest_inputs = {}
            for pk in core_pks:
                kp = self.keyring.get(pk)
                if kp is None:
                    continue
                honest_inputs[pk] = (pending_txs, vrf_eval(kp.sk, prev.seed))
            contract_holds = len(byz) <= (len(core_pks) - 1) // 3
            decision = self.strategy.vector_decision(
                core_pks, byz, honest_inputs, contract_holds, purpose="proposal"
            )
            proposal = build_proposal(
                label,
                view,
                prev,
                self.state,
                honest_inputs,
                cfg.stake_cap,
                byzantine=byz,
                decision=decision,
                meter=self.meter,
            )
            if proposal is not None:
                proposals[label] = proposal.block

        byz_labels = frozenset(corrupted_labels)
        parts = ParticipantSet(members=tuple(committee.labels), byzantine=byz_labels)

        def block_valid(candidate: Block) -> bool:
            # Pre-agreement check: the certificate only exists after the
            # committee has decided and endorsed.
            return bool(
                validate_block(
                    self.state,
                    self.directory,
                    candidate,
                    prev,
                    self.rules,
                    committee.labels,
                    require_certificate=False,
                )
            )

        decision = self.strategy.ba_decision(byz_labels, proposals)
        outcome = verifiable_ba(
            parts,
            proposals,
            block_valid,
            cfg.mu_corrupted,
            decision,
            self.meter,
            instance_weight=cfg.s_min,
        )
        if not outcome.contract_held:
            self.metrics.incident(
                height, "corrupted-committee", labels=sorted(byz_labels)
            )

        decided = outcome.value
        if decided is None and not outcome.contract_held:
            return self._try_equivocation(height, prev, committee, proposals, byz_labels, outcome.rounds)
        if decided is None:
            self.metrics.incident(height, "no-decision")
            self.events.emit("no-block", height, rounds=outcome.rounds)
            return None, outcome.rounds

        certified = self._certify(decided, committee, block_valid)
        if certified is None:
            self.metrics.incident(height, "certificate-shortfall")
            self.events.emit("no-block", height, rounds=outcome.rounds)
            return None, outcome.rounds

        if outcome.contract_held:
            final = validate_block(
                self.state, self.directory, certified, prev, self.rules, committee.labels
            )
            if not final:
                raise RuntimeError(
                    f"certified block failed full validation: {final.reason}"
                )
        self._accept(certified, height, leader=outcome.leader)
        return certified, outcome.rounds

    def _certify(
        self, decided: Block, committee, block_valid: Callable[[Block], bool]
    ) -> Block | None:
        """Collect per-shard endorsement signatures over the decided block.

        Honest members only sign blocks they validated; corrupted members
        follow the strategy.
        """
        cfg = self.cfg
        valid = block_valid(decided)
        byz_signs = self.strategy.signs()
        shard_sigs = []
        for label in committee.labels:
            view = self.runtimes[label].view
            willing = {}
            shard_is_corrupted = self._shard_corrupted(view)
            for cred in view.core:
                corrupted = cred.pk in self.adv.corrupted
                if corrupted:
                    # A corrupted quorum certifies anything the adversary
                    # wants; a minority follows the signing policy.
                    if shard_is_corrupted or byz_signs:
                        willing[cred.pk] = self.keyring[cred.pk].sk
                elif valid:
                    willing[cred.pk] = self.keyring[cred.pk].sk
            signer_order = [c.pk for c in view.core if c.pk in willing]
            ss = shard_sign_block(
                label, view, decided, willing, cfg.mu_core, cfg.s_min, signer_order
            )
            if ss is not None:
                shard_sigs.append(ss)
                self.meter.charge(len(ss.member_sigs))
        if len(shard_sigs) < 2 * cfg.f_shard + 1:
            return None
        return attach_certificate(decided, shard_sigs)

    def _try_equivocation(
        self, height, prev, committee, proposals, byz_labels, rounds
    ) -> tuple[Block | None, int]:
        """Contract-void committee: the adversary may split observers with
        two certified variants, crash the height, or certify one block."""
        base = None
        for label in sorted(byz_labels):
            if label in proposals:
                base = proposals[label]
                break
        if base is None:
            self.metrics.incident(height, "no-decision")
            self.events.emit("no-block", height, rounds=rounds)
            return None, rounds

        def certify_by_corrupted(block: Block) -> Block | None:
            sigs = []
            for label in committee.labels:
                view = self.runtimes[label].view
                willing = {
                    c.pk: self.keyring[c.pk].sk
                    for c in view.core
                    if c.pk in self.adv.corrupted
                }
                order = [c.pk for c in view.core if c.pk in willing]
                ss = shard_sign_block(
                    label, view, block, willing, self.cfg.mu_core, self.cfg.s_min, order
                )
                if ss is not None:
                    sigs.append(ss)
            if len(sigs) < 2 * self.cfg.f_shard + 1:
                return None
            return attach_certificate(block, sigs)

        def craft(variant: int) -> Block | None:
            if variant == 0:
                return certify_by_corrupted(base)
            extra = self._adversary_marker_tx()
            if extra is None:
                return None
            body = tuple(base.body) + (extra,)
            altered = replace(
                base,
                header=replace(base.header, body_hash=_body_hash(body)),
                body=body,
            )
            return certify_by_corrupted(altered)

        variants = self.strategy.equivocate_blocks(craft, self.cfg.observers)
        if not variants:
            single = certify_by_corrupted(base)
            if single is None:
                self.metrics.incident(height, "no-decision")
                self.events.emit("no-block", height, rounds=rounds)
                return None, rounds
            self._accept(single, height, leader=None)
            return single, rounds

        canonical = variants.get(0) or next(iter(variants.values()))
        self.metrics.incident(
            height,
            "equivocation",
            hashes=sorted({header_hash(b.header).hex() for b in variants.values()}),
        )
        self._accept(canonical, height, leader=None, per_observer=variants)
        return canonical, rounds

    def _adversary_marker_tx(self) -> Transaction | None:
        for pk in sorted(self.adv.corrupted):
            utxo = self.state.get(pk)
            if utxo is None or pk in self.in_flight:
                continue
            fresh = self.adv.fresh_key()
            self.keyring[fresh.pk] = fresh
            self.adv.corrupted.add(fresh.pk)
            self.adv.keys[fresh.pk] = fresh
            self.participation[fresh.pk] = self.cfg.participation == "all"
            return make_transaction(
                [self.keyring[pk]], [TxOutput(pk=fresh.pk, stake=utxo.stake)]
            )
        return None

    def _accept(
        self,
        block: Block,
        height: int,
        leader: str | None,
        per_observer: Mapping[int, Block] | None = None,
    ):
        self.chain.append(block)
        self.headers.append(block.header)
        self.state = apply_block(self.state, block)
        self.utxo_history[height] = self.state
        for i, chain in enumerate(self.observer_chains):
            delivered = per_observer.get(i, block) if per_observer else block
            chain.append(delivered)
        self.meter.charge(self.n_users)  # block diffusion
        for tx in block.body:
            tx_hex = tx.tx_id.hex()
            self.metrics.tx_included(tx_hex, height)
            self.pending.pop(tx.tx_id, None)
            for pk in tx.inputs:
                self.in_flight.discard(pk)
            self.events.emit("tx-included", height, tx=tx_hex)
        self.events.emit(
            "block-accepted",
            height,
            block=header_hash(block.header).hex(),
            proposer=block.header.proposer_label,
            leader=leader,
            txs=len(block.body),
        )

    # -- renewals and workload ----------------------------------------------

    def _renewals_and_workload(self, height: int):
        cfg = self.cfg
        for pk in sorted(self.participation):
            if not self.participation[pk]:
                continue
            utxo = self.state.get(pk)
            if utxo is None:
                continue
            h0 = utxo.created_height
            if height < h0 + cfg.epoch_length or (height - h0) % cfg.epoch_length != 0:
                continue
            cred = self._credential(pk, height)
            if cred is None:
                continue
            target = route(self.directory, cred.value)
            rt = self.runtimes[target]
            byz_buffer = self.strategy.buffers_joins()
            seen_buffers = set()
            for c in rt.view.core:
                if c.pk in self.adv.corrupted and not byz_buffer:
                    continue
                buf = rt.buffers.get(c.pk)
                if buf is None or id(buf) in seen_buffers:
                    continue
                seen_buffers.add(id(buf))
                buf.add(cred)
            self.meter.charge(len(rt.view.core))
            self.joins_submitted += 1
            self.events.emit(
                "join", height, label=target, pk=pk.hex(), anchor=cred.anchor_height
            )

        for tx in self.strategy.issue_transactions(
            self.adv, self.state, cfg.stake_cap, height, cfg.epoch_length
        ):
            self._deliver_tx(tx, height, honest=False)

        if cfg.tx_rate and height <= cfg.heights - 2:
            self._issue_workload(height)

    def _issue_workload(self, height: int):
        cfg = self.cfg
        # A key whose secret the adversary has ever held is not an honest
        # user, even after a respend rotates it out of the corrupted set.
        candidates = [
            pk
            for pk in sorted(self.state)
            if pk not in self.in_flight
            and pk not in self.adv.corrupted
            and pk not in self.adv.pending
            and pk not in self.adv.keys
            and pk in self.keyring
        ]
        for _ in range(cfg.tx_rate):
            if not candidates:
                break
            pick = self.workload_prg.draw(len(candidates)) - 1
            sender = candidates.pop(pick)
            receiver = keygen(
                tagged_hash(b"wl-recv", self.master, encode_int(self.workload_counter))
            )
            self.workload_counter += 1
            self.keyring[receiver.pk] = receiver
            self.participation[receiver.pk] = cfg.participation == "all"
            tx = make_transaction(
                [self.keyring[sender]],
                [TxOutput(pk=receiver.pk, stake=self.state[sender].stake)],
            )
            self._deliver_tx(tx, height, honest=True)
            self.in_flight.add(sender)

    def _deliver_tx(self, tx: Transaction, height: int, honest: bool):
        self.pending[tx.tx_id] = tx
        self.metrics.tx_delivered(tx.tx_id.hex(), height, honest)
        self.events.emit(
            "tx-delivered", height, tx=tx.tx_id.hex(), honest=honest
        )

    # -- verdicts ------------------------------------------------------------

    def _finish(self):
        safety_ok = check_safety(self.observer_chains)
        liveness = check_liveness(self.metrics)
        blocks = len(self.chain) - 1
        per_user = self.meter.total / self.n_users if self.n_users else 0.0
        self.metrics.finish(
            safety_ok=safety_ok,
            liveness_ok=liveness.all_included,
            efficiency_ok=liveness.all_within_window,
            fraction_within_window=liveness.fraction_within_window,
            view_violations=self.metrics.view_violations,
            incidents=len(self.metrics.incidents),
            blocks=blocks,
            messages_total=self.meter.total,
            per_user_messages=per_user,
            users=self.n_users,
        )
        self.events.emit(
            "run-complete",
            blocks,
            safety_ok=safety_ok,
            liveness_ok=liveness.all_included,
            efficiency_ok=liveness.all_within_window,
        )


def _body_hash(body: Sequence[Transaction]) -> bytes:
    from .ledger import body_digest

    return body_digest(body)


def run_scenario(config: ScenarioConfig, strict_params: bool = False) -> tuple[Metrics, EventLog]:
    sim = Simulation(config, strict_params=strict_params)
    return sim.run()


def message_scaling_report(configs: Sequence[ScenarioConfig]) -> dict:
    """Run a grid of configs differing only in size and report per-user
    average message counts plus growth ratios between successive entries."""
    rows = []
    for config in configs:
        metrics, _events = run_scenario(config)
        rows.append(
            {
                "name": config.name,
                "n_credentials": config.n_credentials,
                "blocks": metrics.summary["blocks"],
                "messages_total": metrics.summary["messages_total"],
                "per_user_messages": metrics.summary["per_user_messages"],
            }
        )
    ratios = []
    for prev, cur in zip(rows, rows[1:]):
        if prev["per_user_messages"]:
            ratios.append(cur["per_user_messages"] / prev["per_user_messages"])
        else:
            ratios.append(float("inf"))
    return {"rows": rows, "ratios": ratios}
