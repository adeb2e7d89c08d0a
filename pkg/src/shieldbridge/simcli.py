"""Scenario runner and command-line interface.

Scenarios are flat `key = value` files with dotted sections (amounts as
integers, rationals as num/den). A scenario declares protocol parameters,
an oracle script, actors with strategies, a tick horizon, a seed, and
`expect.*` assertions evaluated against the run's metrics. One scenario is
one event loop; identical (config, seed) produces byte-identical trace and
metrics files.

Subcommands:
    run          execute a scenario file (or bundled name): trace.csv, metrics.csv
    privacy      splitting bound reports plus an end-to-end split-and-issue run
    check-bounds exhaustive splitting bound verification, report to stdout

Exit status is zero only when every scenario assertion and bound check
passes.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from random import Random
from typing import Optional

from .notes import Note, NoteCommitment, commit_note, rng_bytes
from .protocol import (
    AWAIT_ISSUE_CONFIRM,
    AWAIT_REDEEM_CONFIRM,
    OK,
    Engine,
    ProtocolConfig,
    conformance_errors,
)
from .relay import Relay
from .splitting import (
    DESK_SCALE_LIMIT,
    BoundsReport,
    SplitConfig,
    check_bounds,
    exact_conditional_expectation,
    sample_prior,
    split,
)
from .vault_registry import RegistryParams
from .zcash_chain import BlockHeader, ChainState, CommitmentTree, Rejection


class ConfigError(ValueError):
    pass


# --- config parsing ----------------------------------------------------------------


def parse_config(text: str) -> dict[str, str]:
    """Flat `key = value` parser; malformed lines fail with their number."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _as_int(entries, key, default=None) -> int:
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(entries[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {entries[key]!r}") from exc


def _as_fraction(entries, key, default=None) -> Fraction:
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    raw = entries[key]
    try:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(int(raw))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{key}: not a rational: {raw!r}") from exc


@dataclass
class ActorSpec:
    name: str
    role: str            # vault | issuer | redeemer
    strategy: str
    zec: int = 0
    i: int = 0
    collateral: int = 0
    vault: str = ""
    amount: int = 0
    at: int = 1
    amount2: int = 0     # second request amount (replay / carve-out flows)
    at2: int = 0


@dataclass
class ScenarioConfig:
    seed: int
    ticks: int
    protocol: ProtocolConfig
    oracle_script: list[tuple[int, Fraction]]
    actors: list[ActorSpec]
    expects: dict[str, str]
    mute_relayer_at: Optional[int] = None


_SCALAR_KEYS = {
    "seed", "ticks", "params.v_max", "params.f", "params.sigma_std",
    "params.i_w", "params.poc_validity", "params.pob_period",
    "params.liq_margin", "relay.k", "relay.mute_honest_at",
    "protocol.delta_mint", "protocol.delta_confirm_issue",
    "protocol.delta_confirm_redeem", "zcash.block_interval", "zcash.fee",
    "zcash.tree_depth",
}
_ACTOR_FIELDS = {"role", "strategy", "zec", "i", "collateral", "vault",
                 "amount", "at", "amount2", "at2"}


def _validate_keys(entries: dict[str, str]) -> None:
    """A misspelled key silently ignored is worse than an error."""
    for key in entries:
        if key in _SCALAR_KEYS:
            continue
        parts = key.split(".")
        if parts[0] == "expect" and len(parts) >= 2:
            continue
        if (parts[0] == "oracle" and len(parts) == 3 and parts[1] == "rate"
                and parts[2].isdigit()):
            continue
        if parts[0] == "actor" and len(parts) == 3 and parts[2] in _ACTOR_FIELDS:
            continue
        raise ConfigError(f"unrecognized key {key!r}")


def load_scenario(text: str) -> ScenarioConfig:
    entries = parse_config(text)
    _validate_keys(entries)
    params = RegistryParams(
        v_max=_as_int(entries, "params.v_max"),
        f=_as_fraction(entries, "params.f"),
        sigma_std=_as_fraction(entries, "params.sigma_std"),
        i_w=_as_int(entries, "params.i_w"),
        poc_validity=_as_int(entries, "params.poc_validity", 100),
        pob_period=_as_int(entries, "params.pob_period", 100),
        liq_margin=_as_fraction(entries, "params.liq_margin", Fraction(1, 10)),
    )
    protocol = ProtocolConfig(
        params,
        relay_k=_as_int(entries, "relay.k", 24),
        delta_mint=_as_int(entries, "protocol.delta_mint", 24),
        delta_confirm_issue=_as_int(entries, "protocol.delta_confirm_issue", 6),
        delta_confirm_redeem=_as_int(entries, "protocol.delta_confirm_redeem", 24),
        zc_block_interval=_as_int(entries, "zcash.block_interval", 1),
        zc_fee=_as_int(entries, "zcash.fee", 1000),
        tree_depth=_as_int(entries, "zcash.tree_depth", 16),
    )
    oracle_script = []
    actor_names = []
    expects = {}
    for key, value in entries.items():
        parts = key.split(".")
        if parts[0] == "oracle":
            oracle_script.append((int(parts[2]), _as_fraction(entries, key)))
        elif parts[0] == "actor" and parts[2] == "role":
            actor_names.append(parts[1])
        elif parts[0] == "expect":
            expects[key.split(".", 1)[1]] = value
    if not oracle_script:
        raise ConfigError("missing oracle script (oracle.rate.<tick> entries)")
    actors = []
    for name in actor_names:
        prefix = f"actor.{name}."
        actors.append(ActorSpec(
            name=name,
            role=entries[prefix + "role"],
            strategy=entries.get(prefix + "strategy", "honest"),
            zec=_as_int(entries, prefix + "zec", 0),
            i=_as_int(entries, prefix + "i", 0),
            collateral=_as_int(entries, prefix + "collateral", 0),
            vault=entries.get(prefix + "vault", ""),
            amount=_as_int(entries, prefix + "amount", 0),
            at=_as_int(entries, prefix + "at", 1),
            amount2=_as_int(entries, prefix + "amount2", 0),
            at2=_as_int(entries, prefix + "at2", 0),
        ))
    mute_at = _as_int(entries, "relay.mute_honest_at", 0) or None
    return ScenarioConfig(
        seed=_as_int(entries, "seed"),
        ticks=_as_int(entries, "ticks"),
        protocol=protocol,
        oracle_script=sorted(oracle_script),
        actors=actors,
        expects=expects,
        mute_relayer_at=mute_at,
    )


# --- actor strategies ----------------------------------------------------------------


class IssueBot:
    """Drives one Issue procedure; tamper knobs model byzantine issuers."""

    def __init__(self, spec: ActorSpec):
        self.spec = spec
        self.phase = "wait"
        self.request_id: Optional[str] = None
        s = spec.strategy
        self.skip_lock = s == "no_lock"
        self.skip_mint = s in ("no_lock", "no_mint")
        self.lock_tamper = s == "random_rcm"
        self.ct_corrupt = s == "wrong_ciphertext"
        self.wrong_relation = s == "wrong_relation"
        self.replay_lock = s == "replay_lock"
        self._old_lock_note = None
        self._round = 0

    def step(self, engine: Engine) -> None:
        spec = self.spec
        if self.phase == "wait":
            if engine.now >= spec.at:
                request = engine.request_lock(spec.name, spec.vault)
                if isinstance(request, Rejection):
                    return
                self.request_id = request.request_id
                self.phase = "locking"
        if self.phase == "locking":
            if self.skip_lock:
                self.phase = "stalled"
                return
            if self._round == 0:
                engine.do_lock(spec.name, self.request_id, spec.amount,
                               tamper_random_rcm=self.lock_tamper)
            else:
                # replay round: no new lock, reuse the old note at mint time
                pass
            self.phase = "minting"
            return
        if self.phase == "minting":
            if self.skip_mint:
                self.phase = "stalled"
                return
            request = engine.requests[self.request_id]
            if request.terminal:
                self.phase = "done"
                return
            override = self._old_lock_note if self._round > 0 else None
            lock_note = override or engine._lock_witness.get(self.request_id)
            if lock_note is None:
                return
            block = engine._cm_block.get(commit_note(lock_note).digest)
            if block is None or not engine.relay.is_final(block):
                return
            transfer = engine.build_mint(self.request_id,
                                         wrong_relation=self.wrong_relation,
                                         lock_note_override=override)
            ct = engine.build_note_ciphertext(transfer.witness.lock_note, spec.vault,
                                              corrupt=self.ct_corrupt)
            result = engine.do_mint(spec.name, self.request_id, transfer, ct)
            if isinstance(result, Rejection):
                self.phase = "stalled"  # deadline will close the request
                return
            self.phase = "minted"
            return
        if self.phase == "minted":
            request = engine.requests[self.request_id]
            if request.terminal:
                if self.replay_lock and self._round == 0:
                    self._old_lock_note = engine._lock_witness.get(self.request_id)
                    self._round = 1
                    self.phase = "wait"
                    self.spec = ActorSpec(**{**spec.__dict__,
                                             "at": engine.now + 1})
                else:
                    self.phase = "done"


class RedeemBot:
    """Drives one (or two, for the replay carve-out) Redeem procedures."""

    def __init__(self, spec: ActorSpec):
        self.spec = spec
        self.phase = "wait"
        self.request_id: Optional[str] = None
        self.ct_corrupt = spec.strategy in ("wrong_ciphertext",
                                            "redeem_wrong_ciphertext")
        self.reuse_release = spec.strategy == "reuse_release"
        self.two_rounds = spec.strategy in ("reuse_release", "double_redeem")
        self._release_note: Optional[Note] = None
        self._round = 0

    def step(self, engine: Engine) -> None:
        spec = self.spec
        start = spec.at if self._round == 0 else (spec.at2 or spec.at)
        amount = spec.amount if self._round == 0 else (spec.amount2 or spec.amount)
        if self.phase == "wait":
            if engine.now >= start and engine.actors[spec.name].wzec.balance() >= amount:
                reuse = self._release_note if (self._round > 0
                                               and self.reuse_release) else None
                transfer, release_note = engine.build_burn(
                    spec.name, spec.vault, amount,
                    reuse_note=reuse, ct_corrupt=self.ct_corrupt)
                request = engine.do_burn(spec.name, spec.vault, transfer)
                if isinstance(request, Rejection):
                    self.phase = "done"
                    return
                self.request_id = request.request_id
                self._release_note = release_note
                self.phase = "pending"
        elif self.phase == "pending":
            request = engine.requests[self.request_id]
            if request.terminal:
                if self.two_rounds and self._round == 0:
                    self._round = 1
                    self.phase = "wait"
                else:
                    self.phase = "done"


class VaultBot:
    """Vault behaviour: honest confirm/challenge, or scripted misbehaviour."""

    def __init__(self, spec: ActorSpec):
        self.spec = spec
        self.strategy = spec.strategy
        self._released_wrong: set[str] = set()
        self._stale_proof: Optional[tuple] = None
        self._stale_attempted: set[str] = set()

    def step(self, engine: Engine) -> None:
        name = self.spec.name
        if self.strategy == "silent":
            return
        record = engine.registry.vaults.get(name)
        if record is None:
            return
        if record.active_issue:
            self._step_issue(engine, engine.requests[record.active_issue])
        if record.active_redeem:
            self._step_redeem(engine, engine.requests[record.active_redeem])

    def _step_issue(self, engine: Engine, request) -> None:
        name = self.spec.name
        if request.terminal or request.state != AWAIT_ISSUE_CONFIRM:
            return
        if self.strategy == "spurious_challenge":
            engine.challenge_issue(name, request.request_id)
            return
        if engine._vault_can_decrypt(request):
            engine.confirm_issue(name, request.request_id)
        else:
            engine.challenge_issue(name, request.request_id)

    def _step_redeem(self, engine: Engine, request) -> None:
        name = self.spec.name
        if request.terminal or request.state != AWAIT_REDEEM_CONFIRM:
            return
        if self.strategy == "proof_replayer":
            # confirm against an already-mined identical commitment, skipping
            # the release entirely (works only when the redeemer reused values)
            if request.release_cm in engine._cm_block:
                engine.confirm_redeem(name, request.request_id)
                return
        if self.strategy == "stale_proof" and self._stale_proof is not None:
            # replay an old release proof against a fresh burn; the relay
            # rejects it because the redeemer chose a fresh commitment
            if request.request_id not in self._stale_attempted:
                self._stale_attempted.add(request.request_id)
                engine.confirm_redeem(name, request.request_id,
                                      proof=self._stale_proof)
            return
        note = engine._decrypt_release_note(request)
        if note is None:
            engine.challenge_redeem(name, request.request_id)
            return
        if self.strategy == "wrong_note":
            if request.request_id not in self._released_wrong:
                wrong = Note(note.address, max(0, note.value - 1), note.rcm)
                engine.do_release(name, request.request_id, note_override=wrong)
                self._released_wrong.add(request.request_id)
            return
        if not request.released:
            engine.do_release(name, request.request_id)
        else:
            block = engine._cm_block.get(request.release_cm)
            if block is not None and engine.relay.is_final(block):
                result = engine.confirm_redeem(name, request.request_id)
                if result == OK and self.strategy == "stale_proof":
                    path = engine.zcash.merkle_path(NoteCommitment(request.release_cm),
                                                    block)
                    self._stale_proof = (path, block)


class EclipseBot:
    """Header-withholding attack: mutes honest relaying, feeds the relay a
    forged branch, then presents an inclusion proof for a commitment the
    true chain never contained."""

    def __init__(self, at: int, rng: Random):
        self.at = at
        self.rng = rng
        self.phase = "wait"
        self.fake_cm: Optional[NoteCommitment] = None
        self.tree: Optional[CommitmentTree] = None
        self.forged_block: Optional[BlockHeader] = None
        self.tip: Optional[BlockHeader] = None
        self.done = False

    def step(self, engine: Engine) -> None:
        if self.done or engine.now < self.at:
            return
        if self.phase == "wait":
            engine.relayer_muted = True
            self.fake_cm = NoteCommitment(rng_bytes(self.rng, 32))
            self.tree = CommitmentTree(depth=engine.zcash.pool.tree.depth)
            self.tree.append(self.fake_cm)
            parent = engine.relay.headers[engine.relay.best_tip]
            self.forged_block = BlockHeader(parent.height + 1, parent.hash,
                                            self.tree.root(), 1, nonce=10**6)
            engine.relay.submit_header(self.forged_block)
            self.tip = self.forged_block
            self.phase = "extend"
            return
        if self.phase == "extend":
            nxt = BlockHeader(self.tip.height + 1, self.tip.hash,
                              self.tip.tree_root, 1, nonce=10**6 + self.tip.height)
            engine.relay.submit_header(nxt)
            self.tip = nxt
            if engine.relay.is_final(self.forged_block.hash):
                path = self.tree.path_at(0, 1)
                verdict = engine.check_inclusion_claim(self.fake_cm, path,
                                                       self.forged_block.hash)
                assert verdict == "verified"
                self.done = True


# --- scenario execution ---------------------------------------------------------------


@dataclass
class ScenarioResult:
    metrics: dict
    trace_csv: str
    metrics_csv: str
    failures: list[str] = field(default_factory=list)
    engine: Optional[Engine] = None

    @property
    def ok(self) -> bool:
        return not self.failures


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None) -> ScenarioResult:
    seed = cfg.seed if seed is None else seed
    engine = Engine(cfg.protocol, seed)
    for tick, rate in cfg.oracle_script:
        engine.oracle.set_rate(tick, rate)

    bots = []
    for spec in cfg.actors:
        engine.add_actor(spec.name,
                         zec_notes=(spec.zec,) if spec.zec else (),
                         i_balance=spec.i)
        if spec.role == "vault":
            bots.append(VaultBot(spec))
        elif spec.role == "issuer":
            bots.append(IssueBot(spec))
        elif spec.role == "redeemer":
            bots.append(RedeemBot(spec))
        elif spec.role == "user":
            bots.append(IssueBot(spec))
            redeem_spec = ActorSpec(**{**spec.__dict__, "at": spec.at2,
                                       "amount": spec.amount2})
            bots.append(RedeemBot(redeem_spec))
        else:
            raise ConfigError(f"unknown role {spec.role!r} for actor {spec.name}")
    engine.start()
    for spec in cfg.actors:
        if spec.role == "vault":
            engine.register_vault(spec.name, spec.collateral)
            engine.submit_poc(spec.name)
    if cfg.mute_relayer_at:
        bots.append(EclipseBot(cfg.mute_relayer_at, Random(seed ^ 0x5EED)))

    def actor_phase(eng: Engine) -> None:
        for bot in bots:
            bot.step(eng)

    engine.run_until(cfg.ticks, actor_phase)

    metrics = collect_metrics(engine)
    failures = check_expects(cfg.expects, metrics)
    failures += conformance_errors(engine)
    return ScenarioResult(metrics, trace_to_csv(engine.trace_rows()),
                          metrics_to_csv(engine), failures, engine)


def collect_metrics(engine: Engine) -> dict:
    m = engine.metrics
    out = {
        "final_supply": engine.issuing.supply,
        "pool_value": engine.issuing.pool_value(),
        "slash_count": m.slash_count,
        "challenge_upheld": m.challenge_upheld,
        "challenge_rejected": m.challenge_rejected,
        "replay_rejections": m.replay_rejections,
        "relay_violations": m.relay_violations,
        "liquidation_count": m.liquidation_count,
        "zec_locked_total": m.zec_locked_total,
        "zec_released_total": m.zec_released_total,
        "finality_flips": engine.relay.metrics.finality_flips,
        "relay_headers_accepted": engine.relay.metrics.headers_accepted,
        "liquidation_pool": engine.issuing.i_ledger.liquidation_pool,
        "total_i": engine.total_i(),
        "backing_deficit": max(0, engine.issuing.supply
                               - (m.zec_locked_total - m.zec_released_total)),
    }
    for vault_id in sorted(engine.registry.vaults):
        out[f"collateral.{vault_id}"] = engine.issuing.i_ledger.collateral_of(vault_id)
        out[f"obligations.{vault_id}"] = engine.registry.witness_obligations(vault_id)
    for name in sorted(engine.actors):
        out[f"balance_i.{name}"] = engine.issuing.i_ledger.balance(name)
    return out


def check_expects(expects: dict[str, str], metrics: dict) -> list[str]:
    failures = []
    for key, expected in expects.items():
        if key not in metrics:
            failures.append(f"expect.{key}: no such metric")
            continue
        actual = str(metrics[key])
        if actual != expected:
            failures.append(f"expect.{key}: wanted {expected}, got {actual}")
    return failures


# --- output files ------------------------------------------------------------------


TRACE_HEADER = "tick,actor,op,request_id,state_before,state_after,outcome"


def trace_to_csv(rows: list[tuple]) -> str:
    lines = [TRACE_HEADER]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    return "\n".join(lines) + "\n"


def metrics_to_csv(engine: Engine) -> str:
    lines = ["tick,name,value"]
    for event in engine.metrics.events:
        tick, kind, *details = event
        lines.append(f"{tick},{kind},{';'.join(str(d) for d in details)}")
    for tick, supply in engine.metrics.supply_series:
        lines.append(f"{tick},supply,{supply}")
    for key, value in sorted(collect_metrics(engine).items()):
        lines.append(f"final,{key},{value}")
    return "\n".join(lines) + "\n"


def bounds_report_csv(report: BoundsReport) -> str:
    lines = ["claim,param_j,param_t,lhs,rhs,pass"]
    for row in report.rows:
        lines.append(f"{row.claim},{row.param_j},{row.param_t},"
                     f"{row.lhs},{row.rhs},{str(row.passed).lower()}")
    return "\n".join(lines) + "\n"


def distribution_csv(cfg: SplitConfig) -> str:
    lines = ["t,j,expectation_num,expectation_den"]
    for t in range(1, cfg.t_max + 1):
        dist = exact_conditional_expectation(t, cfg)
        for j, value in enumerate(dist.values):
            lines.append(f"{t},{j},{value.numerator},{value.denominator}")
    return "\n".join(lines) + "\n"


# --- privacy analysis -----------------------------------------------------------------


def run_privacy_analysis(h: int, k: int, seed: int = 1,
                         total: Optional[int] = None) -> dict:
    """Bound verification plus an end-to-end run: one user splits a total
    across k vaults via k Issue procedures; each vault's observer view ends
    up containing exactly one piece value and never the total."""
    if 2**h > DESK_SCALE_LIMIT:
        raise ConfigError(
            f"2^h = {2**h} exceeds the desk-scale limit {DESK_SCALE_LIMIT}; "
            f"use h <= 16")
    cfg = SplitConfig(h, k)
    report = check_bounds(cfg)
    rng = Random(seed)
    t = total if total is not None else sample_prior(h, rng)
    result = split(t, cfg, rng)
    pieces = list(result.pieces)
    rng.shuffle(pieces)

    params = RegistryParams(v_max=10**9, f=Fraction(2, 100),
                            sigma_std=Fraction(3, 2), i_w=5)
    protocol = ProtocolConfig(params, relay_k=4, delta_mint=16,
                              delta_confirm_issue=6, delta_confirm_redeem=16,
                              tree_depth=10)
    engine = Engine(protocol, seed)
    engine.oracle.set_rate(0, Fraction(2, 1))
    collateral = 2 * 10**9 * 3  # comfortably above the capacity threshold
    vaults = [f"V{i+1}" for i in range(k)]
    for vault in vaults:
        engine.add_actor(vault, i_balance=collateral)
    # one funding note per piece: the locks all happen in the same tick, so
    # each must be spendable independently of the others' change
    note_value = 2**cfg.m + protocol.zc_fee + 1
    engine.add_actor("user", zec_notes=(note_value,) * k, i_balance=5 * k)
    engine.start()
    for vault in vaults:
        engine.register_vault(vault, collateral)
        engine.submit_poc(vault)

    requests = {}
    for vault, piece in zip(vaults, pieces):
        request = engine.request_lock("user", vault)
        engine.do_lock("user", request.request_id, piece)
        requests[vault] = request.request_id
    for _ in range(protocol.relay_k + 2):
        engine.tick()
    for vault in vaults:
        request_id = requests[vault]
        transfer = engine.build_mint(request_id)
        ct = engine.build_note_ciphertext(transfer.witness.lock_note, vault)
        res = engine.do_mint("user", request_id, transfer, ct)
        assert not isinstance(res, Rejection), res
        engine.confirm_issue(vault, request_id)

    vault_views = {}
    for vault in vaults:
        account = engine.actors[vault]
        received = [n.value for n in account.zcash.unspent.values()]
        vault_views[vault] = received[0] if received else 0

    return {
        "cfg": cfg,
        "report": report,
        "total": t,
        "withheld": result.withheld,
        "pieces": pieces,
        "vault_views": vault_views,
        "trace_csv": trace_to_csv(engine.trace_rows()),
        "engine": engine,
    }


def vault_views_csv(vault_views: dict[str, int]) -> str:
    lines = ["vault,observed_piece"]
    for vault in sorted(vault_views):
        lines.append(f"{vault},{vault_views[vault]}")
    return "\n".join(lines) + "\n"


# --- relay safety harness ---------------------------------------------------------------


def run_relay_safety(n_blocks: int, alpha: float, k: int, seed: int,
                     restart_behind: int = 12) -> dict:
    """Honest relaying against a private-fork adversary with hash share
    alpha.

    Each attack round the adversary forks one block below the public tip
    (trying to revert it) and mines privately; it publishes the branch the
    moment it outweighs the public chain, which reorgs every honest block
    above the fork point, and gives up once it falls restart_behind blocks
    behind. Deeper reorgs than the adversary's current deficit are always
    possible in this model, just gambler's-ruin unlikely. Reports reorg
    depths plus the relay's finality flips.
    """
    rng = Random(seed)
    chain = ChainState(depth=4, fee=0)
    relay = Relay(chain.tip.header, finality_depth=k)
    adv_tip: Optional[bytes] = None
    adv_blocks = 0
    reorgs = 0
    deepest = 0
    for _ in range(n_blocks):
        if rng.random() < alpha:
            if adv_tip is None:
                tip_block = chain.blocks[chain.main[-1]]
                if tip_block.header.height == 0:
                    continue  # nothing to revert yet; idle this slot
                # new round: attack the current tip from its parent
                parent = tip_block.header.parent
            else:
                parent = adv_tip
            header = chain.mine_block(parent_hash=parent, txs=[])
            adv_tip = header.hash
            adv_blocks += 1
            if chain.blocks[adv_tip].cum_work > chain.main_work():
                # publish: submit the branch headers, then reorg the chain
                branch = []
                cursor = adv_tip
                while not chain.block_on_main(cursor):
                    branch.append(chain.blocks[cursor].header)
                    cursor = chain.blocks[cursor].header.parent
                fork_height = chain.blocks[cursor].header.height
                deepest = max(deepest, chain.height - fork_height)
                for h in reversed(branch):
                    relay.submit_header(h)
                chain.reorg_to(adv_tip)
                adv_tip = None
                reorgs += 1
        else:
            header = chain.mine_block()
            relay.submit_header(header)
            if adv_tip is not None and (chain.main_work()
                                        - chain.blocks[adv_tip].cum_work) > restart_behind:
                adv_tip = None  # give up, restart against the new tip
    return {
        "blocks": n_blocks,
        "adversary_blocks": adv_blocks,
        "reorgs": reorgs,
        "deepest_reorg": deepest,
        "finality_flips": relay.metrics.finality_flips,
        "tip_switches": relay.metrics.tip_switches,
        # liveness: the relay must have tracked the chain the whole run
        "chain_height": chain.height,
        "relay_height": relay.headers[relay.best_tip].height,
    }


# --- bundled scenarios --------------------------------------------------------------------


def bundled_scenario_names() -> list[str]:
    root = resources.files("shieldbridge") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_bundled_scenario(name: str) -> str:
    path = resources.files("shieldbridge") / "scenarios" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"no bundled scenario {name!r}; "
                          f"available: {', '.join(bundled_scenario_names())}")
    return path.read_text()


def resolve_scenario_text(ref: str) -> str:
    path = Path(ref)
    if path.is_file():
        return path.read_text()
    return load_bundled_scenario(ref)


# --- CLI -------------------------------------------------------------------------------


def _write(out_dir: Path, name: str, content: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(content)


def cmd_run(args) -> int:
    text = resolve_scenario_text(args.scenario)
    cfg = load_scenario(text)
    result = run_scenario(cfg, seed=args.seed)
    if args.out:
        out = Path(args.out)
        _write(out, "trace.csv", result.trace_csv)
        _write(out, "metrics.csv", result.metrics_csv)
    for failure in result.failures:
        print(f"FAIL {failure}")
    status = "pass" if result.ok else "FAIL"
    print(f"scenario {args.scenario}: {status} "
          f"(supply={result.metrics['final_supply']}, "
          f"slashes={result.metrics['slash_count']}, "
          f"violations={result.metrics['relay_violations']})")
    return 0 if result.ok else 1


def cmd_privacy(args) -> int:
    analysis = run_privacy_analysis(args.h, args.k, seed=args.seed, total=args.t)
    report: BoundsReport = analysis["report"]
    if args.out:
        out = Path(args.out)
        _write(out, "bounds_report.csv", bounds_report_csv(report))
        _write(out, "distribution.csv", distribution_csv(analysis["cfg"]))
        _write(out, "trace.csv", analysis["trace_csv"])
        _write(out, "vault_views.csv", vault_views_csv(analysis["vault_views"]))
    pieces = analysis["pieces"]
    print(f"total={analysis['total']} split into {pieces} "
          f"(withheld {analysis['withheld']})")
    print(f"vault views: {analysis['vault_views']}")
    failures = report.unattributed_failures()
    print(f"bound checks: {len(report.rows)} rows, "
          f"{len(report.failures())} failures, "
          f"{len(failures)} outside documented readings")
    return 0 if report.all_pass else 1


def cmd_check_bounds(args) -> int:
    cfg = SplitConfig(args.h, args.k)
    report = check_bounds(cfg)
    by_claim: dict[str, list] = {}
    for row in report.rows:
        by_claim.setdefault(row.claim, []).append(row)
    for claim in sorted(by_claim):
        rows = by_claim[claim]
        failed = [r for r in rows if not r.passed]
        status = "pass" if not failed else f"FAIL ({len(failed)}/{len(rows)})"
        print(f"{claim:32s} {status}")
    print(f"overall: {'pass' if report.all_pass else 'FAIL'} "
          f"(alternate-reading rows excluded)")
    return 0 if report.all_pass else 1


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="shieldbridge",
        description="Deterministic bridge-protocol simulator and splitting "
                    "privacy analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or bundled name")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario's seed")
    p_run.add_argument("--out", default=None, help="directory for csv outputs")
    p_run.set_defaults(func=cmd_run)

    p_priv = sub.add_parser("privacy", help="splitting bound reports plus an "
                                            "end-to-end split-and-issue run")
    p_priv.add_argument("--h", type=int, required=True)
    p_priv.add_argument("--k", type=int, required=True)
    p_priv.add_argument("--t", type=int, default=None,
                        help="total to split (default: sampled from the prior)")
    p_priv.add_argument("--seed", type=int, default=1)
    p_priv.add_argument("--out", default=None)
    p_priv.set_defaults(func=cmd_privacy)

    p_chk = sub.add_parser("check-bounds", help="exhaustive bound verification")
    p_chk.add_argument("--h", type=int, required=True)
    p_chk.add_argument("--k", type=int, required=True)
    p_chk.set_defaults(func=cmd_check_bounds)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
